#include "terraclust/io.hpp"

#include <array>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace terraclust {

namespace {

void write_u64(std::ostream& out, uint64_t v) {
    uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t read_u64(std::istream& in) {
    uint8_t b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw std::runtime_error("truncated binary file");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

void write_f32_block(std::ostream& out, const float* data, size_t n) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 4));
}

void read_f32_block(std::istream& in, float* data, size_t n) {
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * 4));
    if (!in) throw std::runtime_error("truncated binary file");
}

void write_f32_from_double(std::ostream& out, const std::vector<double>& v) {
    std::vector<float> f(v.begin(), v.end());
    write_f32_block(out, f.data(), f.size());
}

std::vector<double> read_f32_to_double(std::istream& in, size_t n) {
    std::vector<float> f(n);
    read_f32_block(in, f.data(), n);
    return std::vector<double>(f.begin(), f.end());
}

void expect_magic(std::istream& in, const char* magic, const std::string& path) {
    char buf[8];
    in.read(buf, 8);
    if (!in || std::memcmp(buf, magic, 8) != 0)
        throw std::runtime_error("bad magic in " + path + " (want " + magic + ")");
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

int64_t to_i64(const std::string& s) {
    int64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw std::runtime_error("bad integer field: '" + s + "'");
    return v;
}

double to_f64(const std::string& s) {
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::runtime_error("");
        return v;
    } catch (...) {
        throw std::runtime_error("bad float field: '" + s + "'");
    }
}

}  // namespace

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string format_float(float v) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
    return buf;
}

void write_patch_csv(const std::string& path, const std::vector<PatchRecord>& patches) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "patch_id,image_id,center_row,center_col,patch_size,depth_mean,"
           "site,drive,pose,rsm_count,eye,filter_class,split,label\n";
    for (const auto& p : patches) {
        out << p.patch_id << ',' << p.image_id << ',' << p.center_row << ',' << p.center_col
            << ',' << p.patch_size << ',' << format_float(p.depth_mean) << ',' << p.site << ','
            << p.drive << ',' << p.pose << ',' << p.rsm_count << ',' << to_string(p.eye) << ','
            << to_string(p.filter_class) << ',' << to_string(p.split) << ',' << p.label << '\n';
    }
    if (!out) throw std::runtime_error("short write: " + path);
}

std::vector<PatchRecord> read_patch_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty patch table: " + path);
    std::vector<PatchRecord> patches;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_csv(line);
        if (f.size() != 14)
            throw std::runtime_error(path + ": expected 14 fields, got " +
                                     std::to_string(f.size()));
        PatchRecord p;
        p.patch_id = to_i64(f[0]);
        p.image_id = to_i64(f[1]);
        p.center_row = static_cast<int>(to_i64(f[2]));
        p.center_col = static_cast<int>(to_i64(f[3]));
        p.patch_size = static_cast<int>(to_i64(f[4]));
        p.depth_mean = static_cast<float>(to_f64(f[5]));
        p.site = static_cast<int>(to_i64(f[6]));
        p.drive = static_cast<int>(to_i64(f[7]));
        p.pose = static_cast<int>(to_i64(f[8]));
        p.rsm_count = static_cast<int>(to_i64(f[9]));
        p.eye = eye_from_string(f[10]);
        p.filter_class = filter_class_from_string(f[11]);
        p.split = split_from_string(f[12]);
        p.label = static_cast<int>(to_i64(f[13]));
        patches.push_back(std::move(p));
    }
    return patches;
}

void write_embeddings(const std::string& path, const EmbeddingSet& e) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write("TCEMB001", 8);
    write_u64(out, static_cast<uint64_t>(e.n_patches));
    write_u64(out, static_cast<uint64_t>(e.dim));
    write_f32_block(out, e.values.data(), e.values.size());
    for (int64_t id : e.patch_ids) write_u64(out, static_cast<uint64_t>(id));
    if (!out) throw std::runtime_error("short write: " + path);
}

EmbeddingSet read_embeddings(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    expect_magic(in, "TCEMB001", path);
    EmbeddingSet e;
    e.n_patches = static_cast<int64_t>(read_u64(in));
    e.dim = static_cast<int64_t>(read_u64(in));
    e.values.resize(static_cast<size_t>(e.n_patches) * e.dim);
    read_f32_block(in, e.values.data(), e.values.size());
    e.patch_ids.resize(e.n_patches);
    for (auto& id : e.patch_ids) id = static_cast<int64_t>(read_u64(in));
    return e;
}

void write_constraints_csv(const std::string& path, const ConstraintSet& cs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& h : cs.hard_links)
        out << "hard," << h.a << ',' << h.b << ',' << to_string(h.source) << '\n';
    for (const auto& s : cs.soft_links)
        out << "soft," << s.a << ',' << s.b << ',' << format_double(s.confidence) << '\n';
    for (const auto& c : cs.cannot_links)
        out << "cannot," << c.a << ',' << c.b << ',' << format_double(c.weight) << '\n';
    if (!out) throw std::runtime_error("short write: " + path);
}

ConstraintSet read_constraints_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    ConstraintSet cs;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto f = split_csv(line);
        if (f.size() != 4)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected 4 fields");
        if (f[0] == "hard") {
            cs.hard_links.push_back({to_i64(f[1]), to_i64(f[2]), source_from_string(f[3])});
        } else if (f[0] == "soft") {
            cs.soft_links.push_back({to_i64(f[1]), to_i64(f[2]), to_f64(f[3])});
        } else if (f[0] == "cannot") {
            cs.cannot_links.push_back({to_i64(f[1]), to_i64(f[2]), to_f64(f[3])});
        } else {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": unknown constraint kind '" + f[0] + "'");
        }
    }
    return cs;
}

void write_metric_model(const std::string& path, const MetricModel& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write("TCMET001", 8);
    write_u64(out, static_cast<uint64_t>(m.in_dim));
    write_u64(out, static_cast<uint64_t>(m.hidden_dim));
    write_u64(out, static_cast<uint64_t>(m.out_dim));
    if (m.hidden_dim > 0) {
        write_f32_from_double(out, m.hidden_weights);
        write_f32_from_double(out, m.hidden_bias);
    }
    write_f32_from_double(out, m.weights);
    write_f32_from_double(out, m.bias);
    if (!out) throw std::runtime_error("short write: " + path);
}

MetricModel read_metric_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    expect_magic(in, "TCMET001", path);
    MetricModel m;
    m.in_dim = static_cast<int>(read_u64(in));
    m.hidden_dim = static_cast<int>(read_u64(in));
    m.out_dim = static_cast<int>(read_u64(in));
    const size_t first_in = m.hidden_dim > 0 ? static_cast<size_t>(m.hidden_dim) * m.in_dim : 0;
    if (m.hidden_dim > 0) {
        m.hidden_weights = read_f32_to_double(in, first_in);
        m.hidden_bias = read_f32_to_double(in, m.hidden_dim);
        m.weights = read_f32_to_double(in, static_cast<size_t>(m.out_dim) * m.hidden_dim);
    } else {
        m.weights = read_f32_to_double(in, static_cast<size_t>(m.out_dim) * m.in_dim);
    }
    m.bias = read_f32_to_double(in, m.out_dim);
    return m;
}

void write_assignments_csv(const std::string& path, const std::vector<int64_t>& patch_ids,
                           const std::vector<int>& assignments) {
    if (patch_ids.size() != assignments.size())
        throw std::invalid_argument("assignments/ids length mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "patch_id,cluster\n";
    for (size_t i = 0; i < patch_ids.size(); ++i)
        out << patch_ids[i] << ',' << assignments[i] << '\n';
    if (!out) throw std::runtime_error("short write: " + path);
}

std::vector<std::pair<int64_t, int>> read_assignments_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty assignments: " + path);
    std::vector<std::pair<int64_t, int>> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_csv(line);
        if (f.size() != 2) throw std::runtime_error(path + ": expected 2 fields");
        out.emplace_back(to_i64(f[0]), static_cast<int>(to_i64(f[1])));
    }
    return out;
}

void write_cluster_model(const std::string& path, const ClusterModel& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write("TCCLU001", 8);
    write_u64(out, static_cast<uint64_t>(m.k));
    write_u64(out, static_cast<uint64_t>(m.dim));
    write_f32_from_double(out, m.centroids);
    char obj[8];
    std::memcpy(obj, &m.objective, 8);
    out.write(obj, 8);
    write_u64(out, static_cast<uint64_t>(m.iterations_run));
    if (!out) throw std::runtime_error("short write: " + path);
}

ClusterModel read_cluster_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    expect_magic(in, "TCCLU001", path);
    ClusterModel m;
    m.k = static_cast<int>(read_u64(in));
    m.dim = static_cast<int64_t>(read_u64(in));
    m.centroids = read_f32_to_double(in, static_cast<size_t>(m.k) * m.dim);
    char obj[8];
    in.read(obj, 8);
    if (!in) throw std::runtime_error("truncated cluster model: " + path);
    std::memcpy(&m.objective, obj, 8);
    m.iterations_run = static_cast<int>(read_u64(in));
    return m;
}

}  // namespace terraclust
