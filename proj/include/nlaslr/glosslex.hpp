#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nlaslr/error.hpp"
#include "nlaslr/tensor.hpp"

namespace nlaslr {

/// Smoothed target distribution over N classes with its ground-truth index.
struct SoftLabel {
    std::vector<double> probs;
    std::size_t target = 0;
};

/// s[i] = <E[b], E[i]> / (|E[b]| |E[i]|).
inline std::vector<double> cosine_row(const Eigen::MatrixXd& embeddings, std::size_t b) {
    if (b >= static_cast<std::size_t>(embeddings.rows()))
        throw Error(ErrorKind::Parameter, "gloss index " + std::to_string(b) + " out of range");
    const Eigen::Index row = static_cast<Eigen::Index>(b);
    const double norm_b = embeddings.row(row).norm();
    if (norm_b == 0.0) throw Error(ErrorKind::DegenerateEmbedding, "embedding row " + std::to_string(b) + " has zero norm");
    std::vector<double> s(static_cast<std::size_t>(embeddings.rows()));
    for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
        const double norm_i = embeddings.row(i).norm();
        if (norm_i == 0.0)
            throw Error(ErrorKind::DegenerateEmbedding, "embedding row " + std::to_string(i) + " has zero norm");
        s[static_cast<std::size_t>(i)] = embeddings.row(row).dot(embeddings.row(i)) / (norm_b * norm_i);
    }
    s[b] = 1.0;
    return s;
}

/// Gloss vocabulary with word embeddings and their cosine-similarity matrix.
/// Immutable after construction.
class GlossLexicon {
   public:
    GlossLexicon(std::vector<std::string> glosses, Eigen::MatrixXd embeddings)
        : glosses_(std::move(glosses)), embeddings_(std::move(embeddings)) {
        if (glosses_.size() < 2)
            throw Error(ErrorKind::InvalidVocabulary, "a lexicon needs at least 2 glosses, got " + std::to_string(glosses_.size()));
        if (static_cast<std::size_t>(embeddings_.rows()) != glosses_.size() || embeddings_.cols() < 1)
            throw Error(ErrorKind::Shape, "embedding matrix does not match the gloss count");
        for (std::size_t i = 0; i < glosses_.size(); ++i) {
            if (!index_.emplace(glosses_[i], i).second)
                throw Error(ErrorKind::DuplicateToken, "gloss '" + glosses_[i] + "' appears twice");
        }
        const Eigen::Index n = embeddings_.rows();
        similarity_.resize(n, n);
        for (Eigen::Index b = 0; b < n; ++b) {
            const auto row = cosine_row(embeddings_, static_cast<std::size_t>(b));
            for (Eigen::Index i = 0; i < n; ++i) similarity_(b, i) = row[static_cast<std::size_t>(i)];
        }
    }

    std::size_t size() const noexcept { return glosses_.size(); }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(embeddings_.cols()); }
    const std::vector<std::string>& glosses() const noexcept { return glosses_; }
    const std::string& gloss(std::size_t i) const { return glosses_.at(i); }
    const Eigen::MatrixXd& embeddings() const noexcept { return embeddings_; }
    const Eigen::MatrixXd& similarity() const noexcept { return similarity_; }
    double similarity(std::size_t a, std::size_t b) const {
        return similarity_(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    }

    std::vector<double> similarity_row(std::size_t b) const {
        std::vector<double> row(size());
        for (std::size_t i = 0; i < size(); ++i) row[i] = similarity(b, i);
        return row;
    }

    std::size_t index_of(std::string_view token) const {
        auto it = index_.find(std::string(token));
        if (it == index_.end()) throw Error(ErrorKind::Data, "gloss '" + std::string(token) + "' not in lexicon");
        return it->second;
    }

    bool contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

    /// Restricts to `vocabulary`, in that order. Every token must resolve.
    GlossLexicon select(const std::vector<std::string>& vocabulary) const {
        Eigen::MatrixXd rows(static_cast<Eigen::Index>(vocabulary.size()), embeddings_.cols());
        for (std::size_t i = 0; i < vocabulary.size(); ++i)
            rows.row(static_cast<Eigen::Index>(i)) = embeddings_.row(static_cast<Eigen::Index>(index_of(vocabulary[i])));
        return GlossLexicon(vocabulary, std::move(rows));
    }

    /// N x d_e embedding matrix as a tensor of the requested precision.
    template <typename T>
    Tensor<T> embedding_tensor() const {
        Tensor<T> out({size(), dim()});
        for (std::size_t i = 0; i < size(); ++i)
            for (std::size_t j = 0; j < dim(); ++j)
                out[i * dim() + j] = static_cast<T>(embeddings_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
        return out;
    }

   private:
    std::vector<std::string> glosses_;
    Eigen::MatrixXd embeddings_;
    Eigen::MatrixXd similarity_;
    std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Word-vector text format: "N d" header, then "token v1 ... vd" per line.

namespace detail {

inline std::vector<std::string_view> split_spaces(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

template <typename Number>
bool parse_number(std::string_view text, Number& out) {
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, out);
    return ec == std::errc() && ptr == end;
}

}  // namespace detail

inline GlossLexicon parse_word_vectors(std::istream& in, const std::string& source = "<stream>") {
    auto fail = [&](std::size_t line_no, const std::string& what) {
        return Error(ErrorKind::Parse, source + ":" + std::to_string(line_no) + ": " + what);
    };
    std::string line;
    if (!std::getline(in, line)) throw fail(1, "missing header");
    const auto header = detail::split_spaces(line);
    std::size_t count = 0, dim = 0;
    if (header.size() != 2 || !detail::parse_number(header[0], count) || !detail::parse_number(header[1], dim) || dim == 0)
        throw fail(1, "malformed header, expected \"N d\"");

    std::vector<std::string> tokens;
    std::unordered_map<std::string, std::size_t> seen;
    Eigen::MatrixXd vectors(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto fields = detail::split_spaces(line);
        if (fields.empty()) continue;
        if (tokens.size() == count) throw fail(line_no, "more vectors than the header declares");
        if (fields.size() != dim + 1)
            throw fail(line_no, "expected " + std::to_string(dim) + " values, got " + std::to_string(fields.size() - 1));
        std::string token(fields[0]);
        if (!seen.emplace(token, tokens.size()).second)
            throw Error(ErrorKind::DuplicateToken, source + ":" + std::to_string(line_no) + ": token '" + token + "' repeated");
        for (std::size_t j = 0; j < dim; ++j) {
            double v = 0.0;
            if (!detail::parse_number(fields[j + 1], v)) throw fail(line_no, "bad number '" + std::string(fields[j + 1]) + "'");
            vectors(static_cast<Eigen::Index>(tokens.size()), static_cast<Eigen::Index>(j)) = v;
        }
        if (vectors.row(static_cast<Eigen::Index>(tokens.size())).norm() == 0.0)
            throw Error(ErrorKind::DegenerateEmbedding, source + ":" + std::to_string(line_no) + ": zero vector for '" + token + "'");
        tokens.push_back(std::move(token));
    }
    if (tokens.size() != count)
        throw fail(line_no, "header declares " + std::to_string(count) + " vectors, found " + std::to_string(tokens.size()));
    return GlossLexicon(std::move(tokens), std::move(vectors));
}

inline GlossLexicon load_word_vectors(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Data, "cannot open word-vector file " + path);
    return parse_word_vectors(in, path);
}

inline void write_word_vectors(std::ostream& out, const GlossLexicon& lexicon) {
    out << lexicon.size() << ' ' << lexicon.dim() << '\n';
    char buf[64];
    for (std::size_t i = 0; i < lexicon.size(); ++i) {
        out << lexicon.gloss(i);
        for (std::size_t j = 0; j < lexicon.dim(); ++j) {
            auto res = std::to_chars(buf, buf + sizeof buf,
                                     lexicon.embeddings()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
            out << ' ' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
        }
        out << '\n';
    }
}

inline void save_word_vectors(const std::string& path, const GlossLexicon& lexicon) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Data, "cannot write " + path);
    write_word_vectors(out, lexicon);
}

// ---------------------------------------------------------------------------
// Soft labels

namespace detail {
inline void check_label_args(std::size_t n, std::size_t b, double epsilon) {
    if (n < 2) throw Error(ErrorKind::InvalidVocabulary, "need at least 2 classes, got " + std::to_string(n));
    if (b >= n) throw Error(ErrorKind::Parameter, "target index " + std::to_string(b) + " out of range");
    if (!(epsilon >= 0.0 && epsilon < 1.0)) throw Error(ErrorKind::Parameter, "epsilon must lie in [0, 1)");
}
}  // namespace detail

/// 1 - eps at b, eps / (N - 1) elsewhere.
inline SoftLabel vanilla_soft_label(std::size_t n, std::size_t b, double epsilon) {
    detail::check_label_args(n, b, epsilon);
    SoftLabel label{std::vector<double>(n, epsilon / static_cast<double>(n - 1)), b};
    label.probs[b] = 1.0 - epsilon;
    return label;
}

/// 1 - eps at b; the remaining eps is split over the negatives by a
/// temperature softmax of their similarity to gloss b.
inline SoftLabel language_aware_soft_label(std::span<const double> similarities, std::size_t b, double epsilon, double tau) {
    const std::size_t n = similarities.size();
    detail::check_label_args(n, b, epsilon);
    if (!(tau > 0.0)) throw Error(ErrorKind::InvalidTemperature, "tau must be positive");

    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
        if (i != b) peak = std::max(peak, similarities[i]);
    SoftLabel label{std::vector<double>(n, 0.0), b};
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (i != b) total += (label.probs[i] = std::exp((similarities[i] - peak) / tau));
    for (std::size_t i = 0; i < n; ++i)
        if (i != b) label.probs[i] *= epsilon / total;
    label.probs[b] = 1.0 - epsilon;
    return label;
}

inline SoftLabel language_aware_soft_label(const GlossLexicon& lexicon, std::size_t b, double epsilon, double tau) {
    if (b >= lexicon.size()) throw Error(ErrorKind::Parameter, "target index " + std::to_string(b) + " out of range");
    const auto row = lexicon.similarity_row(b);
    return language_aware_soft_label(std::span<const double>(row), b, epsilon, tau);
}

}  // namespace nlaslr
