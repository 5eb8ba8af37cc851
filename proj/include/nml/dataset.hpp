#pragma once

#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nml/tensor.hpp"

namespace nml::data {

struct Batch {
    Tensor x;                 // S x input_dim
    std::vector<int> labels;  // length S
    std::size_t size() const { return x.rows; }
};

struct Dataset {
    Tensor x;  // N x input_dim
    std::vector<int> labels;
    int num_classes = 0;

    std::size_t size() const { return x.rows; }
    std::size_t dim() const { return x.cols; }

    Batch batch(const std::vector<std::size_t>& idx) const {
        Batch b;
        b.x = Tensor(idx.size(), x.cols);
        b.labels.resize(idx.size());
        for (std::size_t r = 0; r < idx.size(); ++r) {
            for (std::size_t j = 0; j < x.cols; ++j) b.x.at(r, j) = x.at(idx[r], j);
            b.labels[r] = labels[idx[r]];
        }
        return b;
    }

    Batch full_batch() const {
        std::vector<std::size_t> idx(size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        return batch(idx);
    }
};

// Gaussian cluster classification data: one seeded mean per class, samples
// assigned round-robin so class counts are balanced. `spread` controls the
// class overlap (and thus the loss floor).
inline Dataset synthetic_clusters(int classes, std::size_t dim, std::size_t n, std::uint64_t seed,
                                  double spread = 1.0, double mean_scale = 2.0) {
    if (classes < 2) throw std::invalid_argument("synthetic_clusters: need at least 2 classes");
    if (n == 0 || dim == 0) throw std::invalid_argument("synthetic_clusters: empty geometry");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Tensor means(static_cast<std::size_t>(classes), dim);
    for (double& v : means.data) v = mean_scale * gauss(rng);
    Dataset ds;
    ds.x = Tensor(n, dim);
    ds.labels.resize(n);
    ds.num_classes = classes;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = static_cast<int>(i % static_cast<std::size_t>(classes));
        ds.labels[i] = y;
        for (std::size_t j = 0; j < dim; ++j)
            ds.x.at(i, j) = means.at(static_cast<std::size_t>(y), j) + spread * gauss(rng);
    }
    return ds;
}

// CSV with a header row; the label column is selected by name. Every other
// column is a feature. Labels may be arbitrary strings; they are mapped to
// class ids in first-appearance order.
inline Dataset load_csv(const std::string& path, const std::string& label_column) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("csv: empty file " + path);

    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::string cell;
        std::stringstream ss(s);
        while (std::getline(ss, cell, ',')) out.push_back(cell);
        return out;
    };

    const auto header = split(line);
    std::ptrdiff_t label_idx = -1;
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == label_column) label_idx = static_cast<std::ptrdiff_t>(i);
    if (label_idx < 0) throw std::runtime_error("csv: label column '" + label_column + "' not found");

    std::vector<std::vector<double>> rows;
    std::vector<std::string> raw_labels;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = split(line);
        if (cells.size() != header.size()) throw std::runtime_error("csv: ragged row in " + path);
        std::vector<double> feats;
        feats.reserve(cells.size() - 1);
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (static_cast<std::ptrdiff_t>(i) == label_idx)
                raw_labels.push_back(cells[i]);
            else
                feats.push_back(std::stod(cells[i]));
        }
        rows.push_back(std::move(feats));
    }
    if (rows.empty()) throw std::runtime_error("csv: no data rows in " + path);

    std::vector<std::string> classes;
    Dataset ds;
    ds.labels.reserve(rows.size());
    for (const auto& l : raw_labels) {
        std::size_t c = 0;
        for (; c < classes.size(); ++c)
            if (classes[c] == l) break;
        if (c == classes.size()) classes.push_back(l);
        ds.labels.push_back(static_cast<int>(c));
    }
    ds.num_classes = static_cast<int>(classes.size());
    ds.x = Tensor(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[0].size(); ++j) ds.x.at(i, j) = rows[i][j];
    return ds;
}

namespace detail {
inline std::uint32_t read_be32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("idx: truncated header");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}
}  // namespace detail

// IDX image/label pair (the MNIST container format). Pixels are scaled to [0, 1].
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw std::runtime_error("idx: cannot open " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw std::runtime_error("idx: cannot open " + labels_path);

    if (detail::read_be32(img) != 0x00000803u) throw std::runtime_error("idx: bad image magic");
    const std::uint32_t n = detail::read_be32(img);
    const std::uint32_t rows = detail::read_be32(img);
    const std::uint32_t cols = detail::read_be32(img);

    if (detail::read_be32(lab) != 0x00000801u) throw std::runtime_error("idx: bad label magic");
    if (detail::read_be32(lab) != n) throw std::runtime_error("idx: image/label count mismatch");

    Dataset ds;
    ds.x = Tensor(n, static_cast<std::size_t>(rows) * cols);
    ds.labels.resize(n);
    std::vector<unsigned char> buf(static_cast<std::size_t>(rows) * cols);
    int max_label = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
        img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!img) throw std::runtime_error("idx: truncated image data");
        for (std::size_t j = 0; j < buf.size(); ++j) ds.x.at(i, j) = buf[j] / 255.0;
        char c;
        lab.read(&c, 1);
        if (!lab) throw std::runtime_error("idx: truncated label data");
        ds.labels[i] = static_cast<unsigned char>(c);
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.num_classes = max_label + 1;
    return ds;
}

}  // namespace nml::data
