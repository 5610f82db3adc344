#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "noisr/common.hpp"
#include "noisr/image.hpp"
#include "noisr/image_io.hpp"
#include "noisr/noise.hpp"
#include "noisr/resample.hpp"
#include "noisr/rng.hpp"
#include "noisr/trainer.hpp"

namespace noisr {

enum class Split { train, val, test };

inline std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        default: return "test";
    }
}

inline Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw DataError("manifest: unknown split '" + s + "'");
}

struct SplitSizes {
    int train = 0, val = 0, test = 0;
    int total() const { return train + val + test; }
};

// "a/b/c"
inline SplitSizes parse_splits(const std::string& s) {
    SplitSizes out;
    char sep1 = 0, sep2 = 0;
    std::istringstream in(s);
    if (!(in >> out.train >> sep1 >> out.val >> sep2 >> out.test) || sep1 != '/' || sep2 != '/')
        throw InputError("splits: expected a/b/c, got '" + s + "'");
    if (out.train < 1 || out.val < 1 || out.test < 1)
        throw InputError("splits: each split needs at least one image");
    return out;
}

struct ManifestRecord {
    std::string image_id;
    std::string gt_path;     // relative to the manifest directory
    std::string noisy_path;
    std::string lowres_path;
    Split split = Split::train;
};

struct DatasetManifest {
    NoiseSpec noise;
    int factor = 2;
    std::uint64_t seed = 0;
    NormalizationStats stats;
    std::vector<ManifestRecord> records;
    std::string base_dir; // set on load; not serialized
};

inline void write_manifest(const DatasetManifest& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("write_manifest: cannot write " + path);
    out << "# noisr-manifest v1\n";
    out << "# noise=" << to_string(m.noise.kind) << " mu=" << fmt_double_full(m.noise.mu)
        << " sigma=" << fmt_double_full(m.noise.sigma) << "\n";
    out << "# factor=" << m.factor << "\n";
    out << "# seed=" << m.seed << "\n";
    out << "# stats_mean=" << fmt_double_full(m.stats.mean)
        << " stats_std=" << fmt_double_full(m.stats.std) << "\n";
    out << "image_id,gt_path,noisy_path,lowres_path,split\n";
    for (const ManifestRecord& r : m.records)
        out << r.image_id << "," << r.gt_path << "," << r.noisy_path << "," << r.lowres_path
            << "," << to_string(r.split) << "\n";
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

inline std::string header_value(const std::string& line, const std::string& key) {
    const std::string needle = key + "=";
    const auto pos = line.find(needle);
    if (pos == std::string::npos) throw DataError("manifest: missing header key " + key);
    const auto start = pos + needle.size();
    auto end = line.find(' ', start);
    if (end == std::string::npos) end = line.size();
    return line.substr(start, end - start);
}

} // namespace detail

inline DatasetManifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("read_manifest: cannot open " + path);
    DatasetManifest m;
    m.base_dir = std::filesystem::path(path).parent_path().string();
    std::string line;
    bool saw_magic = false, saw_columns = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            try {
                if (line.find("noisr-manifest") != std::string::npos) {
                    saw_magic = true;
                } else if (line.find("noise=") != std::string::npos) {
                    m.noise.kind = noise_kind_from_string(detail::header_value(line, "noise"));
                    m.noise.mu = std::stod(detail::header_value(line, "mu"));
                    m.noise.sigma = std::stod(detail::header_value(line, "sigma"));
                } else if (line.find("factor=") != std::string::npos) {
                    m.factor = std::stoi(detail::header_value(line, "factor"));
                } else if (line.find("seed=") != std::string::npos) {
                    m.seed = std::stoull(detail::header_value(line, "seed"));
                } else if (line.find("stats_mean=") != std::string::npos) {
                    m.stats.mean = std::stod(detail::header_value(line, "stats_mean"));
                    m.stats.std = std::stod(detail::header_value(line, "stats_std"));
                }
            } catch (const DataError&) {
                throw;
            } catch (const std::exception&) {
                throw DataError("manifest: malformed header line: " + line);
            }
            continue;
        }
        if (!saw_columns && line.rfind("image_id,", 0) == 0) {
            saw_columns = true;
            continue;
        }
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != 5) throw DataError("manifest: malformed row: " + line);
        ManifestRecord r;
        r.image_id = fields[0];
        r.gt_path = fields[1];
        r.noisy_path = fields[2];
        r.lowres_path = fields[3];
        r.split = split_from_string(fields[4]);
        m.records.push_back(r);
    }
    if (!saw_magic) throw DataError("read_manifest: not a noisr manifest: " + path);
    if (m.records.empty()) throw DataError("read_manifest: no records in " + path);
    if (m.factor != 2 && m.factor != 4) throw DataError("read_manifest: bad factor");
    return m;
}

// Loads the triplets of one split, validating shape consistency (L dims must
// be exactly N dims / k, and G must match N).
inline std::vector<Triplet> load_triplets(const DatasetManifest& m, Split split) {
    namespace fs = std::filesystem;
    std::vector<Triplet> out;
    for (const ManifestRecord& r : m.records) {
        if (r.split != split) continue;
        Triplet t;
        t.id = r.image_id;
        t.g = load_image((fs::path(m.base_dir) / r.gt_path).string());
        t.n = load_image((fs::path(m.base_dir) / r.noisy_path).string());
        t.l = load_image((fs::path(m.base_dir) / r.lowres_path).string());
        if (!t.g.same_shape(t.n) || t.l.height * m.factor != t.n.height ||
            t.l.width * m.factor != t.n.width)
            throw DataError("manifest: inconsistent dims for record " + r.image_id);
        out.push_back(std::move(t));
    }
    return out;
}

// Deterministic dataset construction: shuffle the source listing, assign
// splits, grayscale + center-crop each image to a multiple of k, synthesize
// N = noise(G) and L = decimate(N), write everything under out_dir, and pool
// normalization stats over the training-split noisy images.
inline DatasetManifest build_dataset(const std::string& src_dir, const std::string& out_dir,
                                     const NoiseSpec& spec, int factor, std::uint64_t seed,
                                     const SplitSizes& splits) {
    namespace fs = std::filesystem;
    spec.validate();
    if (factor != 2 && factor != 4) throw InputError("build_dataset: factor must be 2 or 4");

    std::vector<std::string> sources;
    if (!fs::is_directory(src_dir)) throw InputError("build_dataset: not a directory: " + src_dir);
    for (const auto& entry : fs::directory_iterator(src_dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = entry.path().extension().string();
        if (ext == ".pgm" || ext == ".png" || ext == ".PGM" || ext == ".PNG")
            sources.push_back(entry.path().string());
    }
    std::sort(sources.begin(), sources.end());
    if (static_cast<int>(sources.size()) < splits.total())
        throw InputError("build_dataset: need " + std::to_string(splits.total()) +
                         " images, found " + std::to_string(sources.size()));

    keyed_shuffle(sources, seed);
    sources.resize(static_cast<std::size_t>(splits.total()));

    fs::create_directories(fs::path(out_dir) / "gt");
    fs::create_directories(fs::path(out_dir) / "noisy");
    fs::create_directories(fs::path(out_dir) / "low");

    DatasetManifest m;
    m.noise = spec;
    m.factor = factor;
    m.seed = seed;
    m.base_dir = out_dir;

    std::vector<ImageGrid> train_noisy;
    for (std::size_t i = 0; i < sources.size(); ++i) {
        Split split = Split::test;
        if (i < static_cast<std::size_t>(splits.train))
            split = Split::train;
        else if (i < static_cast<std::size_t>(splits.train + splits.val))
            split = Split::val;

        const std::string stem = fs::path(sources[i]).stem().string();
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "%04zu", i);
        const std::string id = std::string(idbuf) + "_" + stem;

        ImageGrid g = center_crop_to_multiple(load_image(sources[i]), factor);
        const ImageGrid n = apply_noise(g, spec, keyed_u64(seed, 0xDA7A5E7ull + i));
        const ImageGrid l = decimate(n, SamplingFactor(factor));

        ManifestRecord r;
        r.image_id = id;
        r.gt_path = "gt/" + id + ".pgm";
        r.noisy_path = "noisy/" + id + ".pgm";
        r.lowres_path = "low/" + id + ".pgm";
        r.split = split;
        save_image(g, (fs::path(out_dir) / r.gt_path).string());
        save_image(n, (fs::path(out_dir) / r.noisy_path).string());
        save_image(l, (fs::path(out_dir) / r.lowres_path).string());
        m.records.push_back(r);

        // Stats must match what the trainer will see after 8-bit
        // quantization, hence the simulated round trip.
        if (split == Split::train) train_noisy.push_back(quantize_sim(n));
    }
    m.stats = compute_dataset_stats(train_noisy);
    write_manifest(m, (fs::path(out_dir) / "manifest.csv").string());
    return m;
}

} // namespace noisr
