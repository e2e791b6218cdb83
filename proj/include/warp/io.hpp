#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "block_stats.hpp"
#include "error.hpp"
#include "index_space.hpp"

namespace warp::io {

namespace fs = std::filesystem;

/// Writes through a temporary sibling file and renames it into place.
inline void atomic_write(const fs::path& path, const std::function<void(std::ostream&)>& body) {
    fs::path tmp = path;
    tmp += ".tmp." + std::to_string(std::random_device{}());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot open " + tmp.string() + " for writing");
        body(out);
        out.flush();
        if (!out) {
            out.close();
            fs::remove(tmp);
            throw InputError("write failed for " + path.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw InputError("cannot move output into place at " + path.string() + ": " + ec.message());
    }
}

inline void atomic_write_text(const fs::path& path, const std::string& text) {
    atomic_write(path, [&](std::ostream& os) { os << text; });
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

enum class Format { Pgm, Raw, Csv };

inline Format format_of(const fs::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".pgm") return Format::Pgm;
    if (ext == ".raw" || ext == ".f32" || ext == ".bin") return Format::Raw;
    if (ext == ".csv") return Format::Csv;
    throw InputError("unrecognized image extension '" + ext + "' (expected .pgm, .raw, .f32 or .csv)");
}

inline fs::path sidecar_path(const fs::path& raw) {
    fs::path p = raw;
    p += ".json";
    return p;
}

// ---------------------------------------------------------------------------
// PGM (binary P5). Samples are scaled to [0, 1] on read.

inline Observation read_pgm(const fs::path& path) {
    std::string data = read_file(path);
    std::size_t pos = 0;
    auto skip = [&] {
        while (pos < data.size()) {
            if (std::isspace(static_cast<unsigned char>(data[pos]))) {
                ++pos;
            } else if (data[pos] == '#') {
                while (pos < data.size() && data[pos] != '\n') ++pos;
            } else {
                break;
            }
        }
    };
    auto number = [&]() -> long {
        skip();
        std::size_t start = pos;
        while (pos < data.size() && std::isdigit(static_cast<unsigned char>(data[pos]))) ++pos;
        if (start == pos) throw InputError(path.string() + ": malformed PGM header");
        return std::stol(data.substr(start, pos - start));
    };
    if (data.size() < 2 || data[0] != 'P' || data[1] != '5') throw InputError(path.string() + ": not a binary PGM (P5)");
    pos = 2;
    long width = number(), height = number(), maxval = number();
    if (width < 1 || height < 1 || maxval < 1 || maxval > 65535) throw InputError(path.string() + ": bad PGM header");
    ++pos;  // single whitespace before the raster
    const std::size_t bytes = maxval > 255 ? 2 : 1;
    const std::size_t count = static_cast<std::size_t>(width) * height;
    if (data.size() < pos + count * bytes) throw InputError(path.string() + ": truncated PGM raster");
    std::vector<std::size_t> sides{static_cast<std::size_t>(height), static_cast<std::size_t>(width)};
    Grid g = Grid::from_sides(sides);
    std::vector<double> v(count);
    const auto* p = reinterpret_cast<const unsigned char*>(data.data() + pos);
    for (std::size_t i = 0; i < count; ++i) {
        unsigned s = bytes == 2 ? (unsigned{p[2 * i]} << 8) | p[2 * i + 1] : p[i];
        v[i] = static_cast<double>(s) / static_cast<double>(maxval);
    }
    return Observation(g, std::move(v));
}

/// Clamps to [0, 1] and quantizes to 8 or 16 bits.
inline void write_pgm(const fs::path& path, const Grid& g, std::span<const double> v, int bits = 8) {
    if (g.dims() != 2) throw InputError("PGM output needs a 2D grid");
    if (bits != 8 && bits != 16) throw InputError("PGM depth must be 8 or 16 bits");
    const unsigned maxval = bits == 8 ? 255u : 65535u;
    atomic_write(path, [&](std::ostream& os) {
        os << "P5\n" << g.side(1) << ' ' << g.side(0) << '\n' << maxval << '\n';
        for (double x : v) {
            auto q = static_cast<unsigned>(std::lround(std::clamp(x, 0.0, 1.0) * maxval));
            if (bits == 16) os.put(static_cast<char>(q >> 8));
            os.put(static_cast<char>(q & 0xff));
        }
    });
}

// ---------------------------------------------------------------------------
// Raw float32 little-endian with a JSON sidecar {"dims": [...], "order": "row-major"}.

inline Observation read_raw(const fs::path& path) {
    auto meta = nlohmann::json::parse(read_file(sidecar_path(path)), nullptr, false);
    if (meta.is_discarded() || !meta.contains("dims") || !meta["dims"].is_array())
        throw InputError(sidecar_path(path).string() + ": sidecar must hold a \"dims\" array");
    if (meta.contains("order") && meta["order"] != "row-major")
        throw InputError(sidecar_path(path).string() + ": only row-major order is supported");
    std::vector<std::size_t> sides;
    for (const auto& d : meta["dims"]) {
        if (!d.is_number_integer() || d.get<long long>() < 1) throw InputError("sidecar dims must be positive integers");
        sides.push_back(d.get<std::size_t>());
    }
    Grid g = Grid::from_sides(sides);
    std::string data = read_file(path);
    if (data.size() != g.size() * 4)
        throw InputError(path.string() + ": file holds " + std::to_string(data.size() / 4) + " samples, sidecar dims give " +
                         std::to_string(g.size()));
    std::vector<double> v(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto* b = reinterpret_cast<const unsigned char*>(data.data() + 4 * i);
        std::uint32_t bitsv = std::uint32_t{b[0]} | std::uint32_t{b[1]} << 8 | std::uint32_t{b[2]} << 16 |
                              std::uint32_t{b[3]} << 24;
        v[i] = static_cast<double>(std::bit_cast<float>(bitsv));
    }
    return Observation(g, std::move(v));
}

inline void write_raw(const fs::path& path, const Grid& g, std::span<const double> v) {
    nlohmann::ordered_json meta;
    meta["dims"] = g.sides();
    meta["order"] = "row-major";
    atomic_write(path, [&](std::ostream& os) {
        for (double x : v) {
            std::uint32_t b = std::bit_cast<std::uint32_t>(static_cast<float>(x));
            char buf[4] = {static_cast<char>(b & 0xff), static_cast<char>((b >> 8) & 0xff),
                           static_cast<char>((b >> 16) & 0xff), static_cast<char>(b >> 24)};
            os.write(buf, 4);
        }
    });
    atomic_write_text(sidecar_path(path), meta.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// CSV: one image row per line.

inline Observation read_csv(const fs::path& path) {
    std::istringstream in(read_file(path));
    std::string line;
    std::vector<double> v;
    std::size_t rows = 0, cols = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        std::istringstream ls(line);
        std::string cell;
        std::size_t c = 0;
        while (std::getline(ls, cell, ',')) {
            try {
                std::size_t used = 0;
                v.push_back(std::stod(cell, &used));
            } catch (const std::exception&) {
                throw InputError(path.string() + ": bad number '" + cell + "' on row " + std::to_string(rows + 1));
            }
            ++c;
        }
        if (rows == 0) cols = c;
        if (c != cols) throw InputError(path.string() + ": ragged CSV at row " + std::to_string(rows + 1));
        ++rows;
    }
    if (rows == 0) throw InputError(path.string() + ": empty CSV");
    std::vector<std::size_t> sides{rows, cols};
    return Observation(Grid::from_sides(sides), std::move(v));
}

inline void write_csv(const fs::path& path, const Grid& g, std::span<const double> v) {
    if (g.dims() != 2) throw InputError("CSV output needs a 2D grid");
    atomic_write(path, [&](std::ostream& os) {
        os.precision(17);
        for (std::size_t r = 0; r < g.side(0); ++r) {
            for (std::size_t c = 0; c < g.side(1); ++c) {
                if (c) os << ',';
                os << v[r * g.side(1) + c];
            }
            os << '\n';
        }
    });
}

inline Observation read_image(const fs::path& path) {
    switch (format_of(path)) {
        case Format::Pgm: return read_pgm(path);
        case Format::Raw: return read_raw(path);
        case Format::Csv: return read_csv(path);
    }
    throw InputError("unreachable");
}

inline void write_image(const fs::path& path, const Grid& g, std::span<const double> v, int pgm_bits = 8) {
    switch (format_of(path)) {
        case Format::Pgm: write_pgm(path, g, v, pgm_bits); return;
        case Format::Raw: write_raw(path, g, v); return;
        case Format::Csv: write_csv(path, g, v); return;
    }
}

}  // namespace warp::io
