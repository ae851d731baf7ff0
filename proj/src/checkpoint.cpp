#include "cmda/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "cmda/common.hpp"

namespace cmda {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'C', 'M', 'D', 'A', 'C', 'K', 'P', 'T'};

void write_u32_le(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32_le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) contract_fail("checkpoint: truncated header");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_f32_le(std::ostream& os, float f) {
    uint32_t u;
    std::memcpy(&u, &f, 4);
    write_u32_le(os, u);
}

float read_f32_le(std::istream& is, const std::string& pname) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) contract_fail("checkpoint: truncated payload while reading '", pname, "'");
    const uint32_t u = static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
                       (static_cast<uint32_t>(b[2]) << 16) |
                       (static_cast<uint32_t>(b[3]) << 24);
    float f;
    std::memcpy(&f, &u, 4);
    return f;
}

json shape_json(const Shape4& s) { return json::array({s.n, s.c, s.h, s.w}); }

Shape4 shape_from_json(const json& j, const std::string& pname) {
    if (!j.is_array() || j.size() != 4)
        contract_fail("checkpoint: malformed shape for '", pname, "'");
    return Shape4{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

json seg_cfg_json(const SegmenterConfig& c) {
    return json{{"in_channels", c.in_channels},
                {"num_classes", c.num_classes},
                {"base_width", c.base_width},
                {"rm_widths", c.rm_widths}};
}

SegmenterConfig seg_cfg_from_json(const json& j) {
    SegmenterConfig c;
    c.in_channels = j.at("in_channels").get<int>();
    c.num_classes = j.at("num_classes").get<int>();
    c.base_width = j.at("base_width").get<int>();
    c.rm_widths = j.at("rm_widths").get<std::vector<int>>();
    return c;
}

json adapt_cfg_json(const AdaptationConfig& c) {
    return json{{"depth", c.depth},
                {"dam_taps", c.dam_taps},
                {"frozen_taps", c.frozen_taps},
                {"clip_c", c.clip_c},
                {"n_dcm_per_dam", c.n_dcm_per_dam},
                {"critic_width_cap", c.critic_width_cap}};
}

AdaptationConfig adapt_cfg_from_json(const json& j) {
    AdaptationConfig c;
    c.depth = j.at("depth").get<int>();
    c.dam_taps = j.at("dam_taps").get<std::vector<int>>();
    c.frozen_taps = j.at("frozen_taps").get<std::vector<int>>();
    c.clip_c = j.at("clip_c").get<double>();
    c.n_dcm_per_dam = j.at("n_dcm_per_dam").get<int>();
    c.critic_width_cap = j.at("critic_width_cap").get<int>();
    return c;
}

using NamedParams = std::vector<std::pair<std::string, VarPtr>>;

NamedParams collect(const ParamStore& store) {
    NamedParams out;
    for (const auto& p : store.all()) out.emplace_back(p->name, p);
    return out;
}

void write_file(const std::string& path, const json& manifest, const NamedParams& params) {
    std::filesystem::path fp(path);
    if (fp.has_parent_path()) std::filesystem::create_directories(fp.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) contract_fail("checkpoint: cannot open '", path, "' for writing");
    os.write(kMagic, 8);
    const std::string m = manifest.dump();
    write_u32_le(os, static_cast<uint32_t>(m.size()));
    os.write(m.data(), static_cast<std::streamsize>(m.size()));
    for (const auto& [name, var] : params)
        for (Scalar v : var->value.data) write_f32_le(os, static_cast<float>(v));
    os.flush();
    if (!os) contract_fail("checkpoint: write failed for '", path, "'");
}

json param_list_json(const NamedParams& params) {
    json out = json::array();
    for (const auto& [name, var] : params)
        out.push_back(json{{"name", name}, {"shape", shape_json(var->value.shape)}});
    return out;
}

json read_manifest(std::istream& is, const std::string& path) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        contract_fail("checkpoint: '", path, "' is not a checkpoint file (bad magic)");
    const uint32_t mlen = read_u32_le(is);
    if (mlen == 0 || mlen > (100u << 20))
        contract_fail("checkpoint: implausible manifest length ", mlen, " in '", path, "'");
    std::string m(mlen, '\0');
    is.read(m.data(), mlen);
    if (!is) contract_fail("checkpoint: truncated manifest in '", path, "'");
    json j = json::parse(m, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded())
        contract_fail("checkpoint: corrupt manifest JSON in '", path, "'");
    return j;
}

// Validates names and shapes against the manifest, then fills values from the
// payload. Expected order comes from the freshly rebuilt models.
void load_payload(std::istream& is, const std::string& path, const json& manifest,
                  const NamedParams& expected) {
    const json& plist = manifest.at("params");
    if (!plist.is_array() || plist.size() != expected.size())
        contract_fail("checkpoint: '", path, "' lists ", plist.size(), " params, model has ",
                      expected.size());
    for (size_t i = 0; i < expected.size(); ++i) {
        const std::string name = plist[i].at("name").get<std::string>();
        if (name != expected[i].first)
            contract_fail("checkpoint: parameter order mismatch at #", i, ": file has '",
                          name, "', model expects '", expected[i].first, "'");
        const Shape4 s = shape_from_json(plist[i].at("shape"), name);
        if (!(s == expected[i].second->value.shape))
            contract_fail("checkpoint: shape mismatch for '", name, "': file ", s.str(),
                          ", model ", expected[i].second->value.shape.str());
    }
    for (const auto& [name, var] : expected)
        for (Scalar& v : var->value.data)
            v = static_cast<double>(read_f32_le(is, name));
    char extra;
    is.read(&extra, 1);
    if (!is.eof())
        contract_fail("checkpoint: trailing bytes after payload in '", path, "'");
}

void fill_meta(const json& manifest, CheckpointMeta* meta) {
    if (!meta) return;
    meta->kind = manifest.at("kind").get<std::string>();
    meta->seed = manifest.at("seed").get<uint64_t>();
    meta->counters.clear();
    for (const auto& [k, v] : manifest.at("counters").items())
        meta->counters[k] = v.get<long long>();
}

}  // namespace

void save_source_checkpoint(const std::string& path, const Segmenter& model,
                            uint64_t seed,
                            const std::map<std::string, long long>& counters) {
    NamedParams params = collect(model.params);
    json manifest{{"kind", "source"},
                  {"format_version", 1},
                  {"seed", seed},
                  {"counters", counters},
                  {"segmenter", seg_cfg_json(model.cfg)},
                  {"params", param_list_json(params)}};
    write_file(path, manifest, params);
}

Segmenter load_source_checkpoint(const std::string& path, CheckpointMeta* meta) {
    std::ifstream is(path, std::ios::binary);
    if (!is) contract_fail("checkpoint: cannot open '", path, "'");
    json manifest = read_manifest(is, path);
    if (manifest.at("kind").get<std::string>() != "source")
        contract_fail("checkpoint: '", path, "' has kind '",
                      manifest.at("kind").get<std::string>(), "', expected 'source'");
    Segmenter m = build_segmenter(seg_cfg_from_json(manifest.at("segmenter")), 0);
    load_payload(is, path, manifest, collect(m.params));
    fill_meta(manifest, meta);
    return m;
}

void save_adapted_checkpoint(const std::string& path, const Segmenter& source,
                             const DomainAdapter& dam, const AdaptationConfig& cfg,
                             uint64_t seed,
                             const std::map<std::string, long long>& counters) {
    NamedParams params = collect(source.params);
    for (auto& p : collect(dam.params)) params.push_back(p);
    json manifest{{"kind", "adapted"},
                  {"format_version", 1},
                  {"seed", seed},
                  {"counters", counters},
                  {"segmenter", seg_cfg_json(source.cfg)},
                  {"adaptation", adapt_cfg_json(cfg)},
                  {"params", param_list_json(params)}};
    write_file(path, manifest, params);
}

AdaptedModels load_adapted_checkpoint(const std::string& path, CheckpointMeta* meta) {
    std::ifstream is(path, std::ios::binary);
    if (!is) contract_fail("checkpoint: cannot open '", path, "'");
    json manifest = read_manifest(is, path);
    if (manifest.at("kind").get<std::string>() != "adapted")
        contract_fail("checkpoint: '", path, "' has kind '",
                      manifest.at("kind").get<std::string>(), "', expected 'adapted'");
    AdaptedModels out{build_segmenter(seg_cfg_from_json(manifest.at("segmenter")), 0),
                      DomainAdapter{},
                      adapt_cfg_from_json(manifest.at("adaptation"))};
    out.cfg.validate(out.source);
    out.dam = build_dam(out.source, out.cfg.depth);
    NamedParams expected = collect(out.source.params);
    for (auto& p : collect(out.dam.params)) expected.push_back(p);
    load_payload(is, path, manifest, expected);
    fill_meta(manifest, meta);
    return out;
}

std::string checkpoint_kind(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) contract_fail("checkpoint: cannot open '", path, "'");
    return read_manifest(is, path).at("kind").get<std::string>();
}

}  // namespace cmda
