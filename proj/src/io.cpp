#include "grrhdr/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace grrhdr {

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw format_error("cannot open: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& data) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw format_error("cannot open for writing: " + tmp);
        f.write(data.data(), static_cast<std::streamsize>(data.size()));
        if (!f) throw format_error("short write: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw format_error("cannot move into place: " + path);
}

namespace {

// netpbm token reader: skips whitespace and # comments.
std::string next_token(const std::string& data, size_t* pos) {
    size_t p = *pos;
    while (p < data.size()) {
        if (data[p] == '#') {
            while (p < data.size() && data[p] != '\n') ++p;
        } else if (std::isspace(static_cast<unsigned char>(data[p]))) {
            ++p;
        } else {
            break;
        }
    }
    const size_t start = p;
    while (p < data.size() && !std::isspace(static_cast<unsigned char>(data[p])))
        ++p;
    if (start == p) throw format_error("truncated netpbm header");
    *pos = p;
    return data.substr(start, p - start);
}

int parse_dim(const std::string& token) {
    size_t used = 0;
    int v;
    try {
        v = std::stoi(token, &used);
    } catch (const std::exception&) {
        throw format_error("bad integer in header: " + token);
    }
    if (used != token.size() || v <= 0)
        throw format_error("bad dimension in header: " + token);
    return v;
}

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint32_t get_u32(const std::string& d, size_t p) {
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<uint8_t>(d[p + i]);
    return v;
}

uint64_t get_u64(const std::string& d, size_t p) {
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<uint8_t>(d[p + i]);
    return v;
}

}  // namespace

RadianceImage read_pfm(const std::string& path) {
    const std::string data = read_file(path);
    size_t pos = 0;
    const std::string magic = next_token(data, &pos);
    int channels;
    if (magic == "PF") channels = 3;
    else if (magic == "Pf") channels = 1;
    else throw format_error("not a PFM file: " + path);
    const int width = parse_dim(next_token(data, &pos));
    const int height = parse_dim(next_token(data, &pos));
    double scale;
    try {
        scale = std::stod(next_token(data, &pos));
    } catch (const std::exception&) {
        throw format_error("bad PFM scale");
    }
    if (scale == 0.0) throw format_error("PFM scale must be nonzero");
    if (pos >= data.size() || !std::isspace(static_cast<unsigned char>(data[pos])))
        throw format_error("malformed PFM header");
    ++pos;  // single whitespace byte terminates the header

    const size_t count = static_cast<size_t>(width) * height * channels;
    if (data.size() - pos != count * 4)
        throw format_error("PFM payload size mismatch: " + path);

    const bool big_endian_file = scale > 0.0;
    RadianceImage img(width, height, channels);
    // PFM rows run bottom-up.
    for (int r = 0; r < height; ++r) {
        const int src_row = height - 1 - r;
        const char* src = data.data() + pos +
                          static_cast<size_t>(src_row) * width * channels * 4;
        for (int i = 0; i < width * channels; ++i) {
            uint32_t bits;
            std::memcpy(&bits, src + static_cast<size_t>(i) * 4, 4);
            if (big_endian_file) bits = __builtin_bswap32(bits);
            float f;
            std::memcpy(&f, &bits, 4);
            img.data[(static_cast<size_t>(r) * width) * channels + i] =
                static_cast<double>(f) * std::fabs(scale);
        }
    }
    img.validate();  // rejects NaN and negative samples
    return img;
}

void write_pfm(const std::string& path, const RadianceImage& img) {
    img.validate();
    std::string out = (img.channels == 3 ? "PF\n" : "Pf\n");
    out += std::to_string(img.width) + " " + std::to_string(img.height) + "\n";
    out += "-1.0\n";
    for (int r = img.height - 1; r >= 0; --r) {
        for (int i = 0; i < img.width * img.channels; ++i) {
            const float f = static_cast<float>(
                img.data[(static_cast<size_t>(r) * img.width) * img.channels + i]);
            char buf[4];
            std::memcpy(buf, &f, 4);
            out.append(buf, 4);
        }
    }
    write_file_atomic(path, out);
}

std::vector<uint16_t> read_pgm(const std::string& path, int* width, int* height,
                               int* maxval) {
    const std::string data = read_file(path);
    size_t pos = 0;
    if (next_token(data, &pos) != "P5")
        throw format_error("not a binary PGM: " + path);
    const int w = parse_dim(next_token(data, &pos));
    const int h = parse_dim(next_token(data, &pos));
    const int mv = parse_dim(next_token(data, &pos));
    if (mv > 65535) throw format_error("PGM maxval too large");
    if (pos >= data.size() || !std::isspace(static_cast<unsigned char>(data[pos])))
        throw format_error("malformed PGM header");
    ++pos;

    const size_t n = static_cast<size_t>(w) * h;
    const int bytes = mv > 255 ? 2 : 1;
    if (data.size() - pos != n * bytes)
        throw format_error("PGM payload size mismatch: " + path);
    std::vector<uint16_t> dn(n);
    for (size_t i = 0; i < n; ++i) {
        if (bytes == 1) {
            dn[i] = static_cast<uint8_t>(data[pos + i]);
        } else {
            dn[i] = static_cast<uint16_t>(
                (static_cast<uint8_t>(data[pos + 2 * i]) << 8) |
                static_cast<uint8_t>(data[pos + 2 * i + 1]));
        }
        if (dn[i] > mv) throw format_error("PGM sample exceeds maxval");
    }
    *width = w;
    *height = h;
    *maxval = mv;
    return dn;
}

void write_pgm(const std::string& path, const std::vector<uint16_t>& dn,
               int width, int height, int maxval) {
    if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535)
        throw param_error("bad PGM geometry");
    if (dn.size() != static_cast<size_t>(width) * height)
        throw param_error("PGM buffer size mismatch");
    std::string out = "P5\n" + std::to_string(width) + " " +
                      std::to_string(height) + "\n" + std::to_string(maxval) + "\n";
    const int bytes = maxval > 255 ? 2 : 1;
    for (uint16_t v : dn) {
        if (v > maxval) throw param_error("PGM sample exceeds maxval");
        if (bytes == 2) out.push_back(static_cast<char>(v >> 8));
        out.push_back(static_cast<char>(v & 0xff));
    }
    write_file_atomic(path, out);
}

std::vector<uint8_t> read_pbm(const std::string& path, int* width, int* height) {
    const std::string data = read_file(path);
    size_t pos = 0;
    if (next_token(data, &pos) != "P4")
        throw format_error("not a binary PBM: " + path);
    const int w = parse_dim(next_token(data, &pos));
    const int h = parse_dim(next_token(data, &pos));
    if (pos >= data.size() || !std::isspace(static_cast<unsigned char>(data[pos])))
        throw format_error("malformed PBM header");
    ++pos;
    const size_t row_bytes = (static_cast<size_t>(w) + 7) / 8;
    if (data.size() - pos != row_bytes * h)
        throw format_error("PBM payload size mismatch: " + path);
    std::vector<uint8_t> mask(static_cast<size_t>(w) * h, 0);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const uint8_t byte =
                static_cast<uint8_t>(data[pos + r * row_bytes + c / 8]);
            mask[static_cast<size_t>(r) * w + c] = (byte >> (7 - c % 8)) & 1;
        }
    *width = w;
    *height = h;
    return mask;
}

void write_pbm(const std::string& path, const std::vector<uint8_t>& mask,
               int width, int height) {
    if (mask.size() != static_cast<size_t>(width) * height)
        throw param_error("PBM buffer size mismatch");
    std::string out =
        "P4\n" + std::to_string(width) + " " + std::to_string(height) + "\n";
    const size_t row_bytes = (static_cast<size_t>(width) + 7) / 8;
    for (int r = 0; r < height; ++r) {
        std::string row(row_bytes, '\0');
        for (int c = 0; c < width; ++c)
            if (mask[static_cast<size_t>(r) * width + c])
                row[c / 8] |= static_cast<char>(1 << (7 - c % 8));
        out += row;
    }
    write_file_atomic(path, out);
}

namespace {
constexpr char kMatrixMagic[4] = {'G', 'H', 'S', 'M'};
constexpr uint32_t kMatrixVersion = 1;
}  // namespace

SparseSystemMatrix read_matrix(const std::string& path) {
    const std::string d = read_file(path);
    if (d.size() < 28 || std::memcmp(d.data(), kMatrixMagic, 4) != 0)
        throw format_error("not a system matrix file: " + path);
    if (get_u32(d, 4) != kMatrixVersion)
        throw format_error("unsupported matrix version in " + path);
    SparseSystemMatrix m;
    m.n_sensor = get_u32(d, 8);
    m.n_scene = get_u32(d, 12);
    const uint64_t n_entries = get_u64(d, 16);
    const uint32_t n_invalid = get_u32(d, 24);
    const size_t expect = 28 + n_entries * 16 + static_cast<size_t>(n_invalid) * 4;
    if (d.size() != expect)
        throw format_error("matrix payload size mismatch: " + path);
    size_t pos = 28;
    m.entries.resize(n_entries);
    for (uint64_t i = 0; i < n_entries; ++i) {
        m.entries[i].sensor = get_u32(d, pos);
        m.entries[i].scene = get_u32(d, pos + 4);
        const uint64_t bits = get_u64(d, pos + 8);
        double flux;
        std::memcpy(&flux, &bits, 8);
        m.entries[i].flux = flux;
        pos += 16;
    }
    m.invalid_pixels.resize(n_invalid);
    for (uint32_t i = 0; i < n_invalid; ++i) {
        m.invalid_pixels[i] = get_u32(d, pos);
        pos += 4;
    }
    try {
        m.validate();
    } catch (const param_error& e) {
        throw format_error(std::string("corrupt matrix file: ") + e.what());
    }
    return m;
}

void write_matrix(const std::string& path, const SparseSystemMatrix& m) {
    m.validate();
    std::string out(kMatrixMagic, 4);
    put_u32(out, kMatrixVersion);
    put_u32(out, m.n_sensor);
    put_u32(out, m.n_scene);
    put_u64(out, m.entries.size());
    put_u32(out, static_cast<uint32_t>(m.invalid_pixels.size()));
    for (const SparseEntry& e : m.entries) {
        put_u32(out, e.sensor);
        put_u32(out, e.scene);
        uint64_t bits;
        std::memcpy(&bits, &e.flux, 8);
        put_u64(out, bits);
    }
    for (uint32_t v : m.invalid_pixels) put_u32(out, v);
    write_file_atomic(path, out);
}

std::string mask_path(const std::string& measurement_path) {
    return measurement_path + ".mask.pbm";
}

std::string sidecar_path(const std::string& measurement_path) {
    return measurement_path + ".json";
}

void write_measurement(const std::string& path, const Measurement& m,
                       const MeasurementMeta& meta) {
    m.validate();
    write_pgm(path, m.dn, m.width, m.height, m.max_dn());
    if (!m.erasure.empty())
        write_pbm(mask_path(path), m.erasure, m.width, m.height);

    nlohmann::json j;
    j["grrhdr_measurement"] = 1;
    j["width"] = m.width;
    j["height"] = m.height;
    j["bit_depth"] = m.bit_depth;
    j["layout"] = meta.layout;
    if (!meta.cfa.empty()) j["cfa"] = meta.cfa;
    j["shutter"] = {{"t0", meta.shutter.t0},
                    {"tr", meta.shutter.tr},
                    {"rows", meta.shutter.rows}};
    j["optics"] = {{"type", meta.shuffled ? "shuffle" : "identity"},
                   {"seed", meta.optics_seed}};
    j["sensor"] = {{"gain", meta.gain},
                   {"noise_sigma", meta.noise_sigma},
                   {"noise_seed", meta.noise_seed}};
    j["low_threshold"] = meta.low_threshold;
    j["erase_underexposed"] = meta.erase_underexposed;
    j["scene_scale"] = meta.scene_scale;
    if (meta.achieved_saturation >= 0.0) {
        j["achieved_saturation"] = meta.achieved_saturation;
        j["saturation_attained"] = meta.saturation_attained;
    }
    write_file_atomic(sidecar_path(path), j.dump(2) + "\n");
}

Measurement read_measurement(const std::string& path, MeasurementMeta* meta) {
    Measurement m;
    int w, h, mv;
    m.dn = read_pgm(path, &w, &h, &mv);
    m.width = w;
    m.height = h;

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(sidecar_path(path)));
    } catch (const nlohmann::json::exception& e) {
        throw format_error("bad measurement sidecar: " + std::string(e.what()));
    }
    try {
        if (j.value("grrhdr_measurement", 0) != 1)
            throw format_error("sidecar is not a measurement record");
        if (j.at("width").get<int>() != w || j.at("height").get<int>() != h)
            throw format_error("sidecar geometry disagrees with the PGM");
        m.bit_depth = j.at("bit_depth").get<int>();
        if (m.max_dn() != mv)
            throw format_error("PGM maxval disagrees with the sidecar bit depth");
        MeasurementMeta out;
        out.bit_depth = m.bit_depth;
        out.layout = j.value("layout", std::string("sensor"));
        out.cfa = j.value("cfa", std::string());
        out.shutter.t0 = j.at("shutter").at("t0").get<double>();
        out.shutter.tr = j.at("shutter").at("tr").get<double>();
        out.shutter.rows = j.at("shutter").at("rows").get<int>();
        out.shuffled = j.at("optics").at("type").get<std::string>() == "shuffle";
        out.optics_seed = j.at("optics").at("seed").get<uint64_t>();
        out.gain = j.at("sensor").at("gain").get<double>();
        out.noise_sigma = j.at("sensor").at("noise_sigma").get<double>();
        out.noise_seed = j.at("sensor").at("noise_seed").get<uint64_t>();
        out.low_threshold = j.value("low_threshold", 0);
        out.erase_underexposed = j.value("erase_underexposed", false);
        out.scene_scale = j.value("scene_scale", 1.0);
        out.achieved_saturation = j.value("achieved_saturation", -1.0);
        out.saturation_attained = j.value("saturation_attained", false);
        if (meta) *meta = out;
    } catch (const nlohmann::json::exception& e) {
        throw format_error("bad measurement sidecar: " + std::string(e.what()));
    }

    std::ifstream probe(mask_path(path));
    if (probe.good()) {
        int mw, mh;
        m.erasure = read_pbm(mask_path(path), &mw, &mh);
        if (mw != w || mh != h)
            throw format_error("erasure mask geometry mismatch");
    }
    m.validate();
    return m;
}

}  // namespace grrhdr
