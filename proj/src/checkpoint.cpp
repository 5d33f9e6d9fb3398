#include "dd/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dd/config.hpp"
#include "dd/errors.hpp"

namespace fs = std::filesystem;

namespace dd {

namespace {

constexpr int kFormatVersion = 1;

std::string fmt_double(double v) {
    std::ostringstream ss;
    ss << std::setprecision(17) << v;
    return ss.str();
}

std::string join_sizes(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(v[i]);
    }
    return s;
}

void write_stream(std::ostream& out, const std::string& role, const CounterRng& rng) {
    out << "rng." << role << ".key = " << rng.key() << "\n";
    out << "rng." << role << ".counter = " << rng.counter() << "\n";
}

CounterRng read_stream(const KeyValueConfig& kv, const std::string& role) {
    return CounterRng(kv.get_uint("rng." + role + ".key"), kv.get_uint("rng." + role + ".counter"));
}

void write_int_blob(const std::vector<int>& v, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for write: " + path);
    const std::uint32_t n = static_cast<std::uint32_t>(v.size());
    out.write(reinterpret_cast<const char*>(&n), 4);
    for (int x : v) {
        const std::int32_t y = x;
        out.write(reinterpret_cast<const char*>(&y), 4);
    }
    if (!out) throw FormatError("short write: " + path);
}

std::vector<int> read_int_blob(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open: " + path);
    std::uint32_t n = 0;
    in.read(reinterpret_cast<char*>(&n), 4);
    std::vector<int> v(n);
    for (auto& x : v) {
        std::int32_t y = 0;
        in.read(reinterpret_cast<char*>(&y), 4);
        x = y;
    }
    if (!in) throw FormatError("truncated int blob: " + path);
    return v;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& dir) {
    ck.spec.validate();
    fs::create_directories(fs::path(dir) / "params");
    std::ofstream man(fs::path(dir) / "manifest.txt");
    if (!man) throw FormatError("cannot write manifest in " + dir);
    man << "format_version = " << kFormatVersion << "\n";
    man << "arch = " << arch_name(ck.spec.arch) << "\n";
    man << "input_dims = " << join_sizes(ck.spec.input_dims) << "\n";
    man << "hidden = " << join_sizes(ck.spec.hidden) << "\n";
    man << "time_dim = " << ck.spec.time_dim << "\n";
    man << "schedule.kind = " << ck.schedule_kind << "\n";
    man << "schedule.T = " << ck.schedule_T << "\n";
    man << "iteration = " << ck.iteration << "\n";
    std::string names;
    for (const auto& [name, t] : ck.params) {
        if (!names.empty()) names += ",";
        names += name;
    }
    man << "params = " << names << "\n";
    man << "opt.present = " << (ck.has_opt ? "true" : "false") << "\n";
    if (ck.has_opt) {
        man << "opt.step = " << ck.opt_step << "\n";
        man << "opt.lr = " << fmt_double(ck.opt_cfg.lr) << "\n";
        man << "opt.beta1 = " << fmt_double(ck.opt_cfg.beta1) << "\n";
        man << "opt.beta2 = " << fmt_double(ck.opt_cfg.beta2) << "\n";
        man << "opt.eps = " << fmt_double(ck.opt_cfg.eps) << "\n";
    }
    man << "rng.present = " << (ck.has_streams ? "true" : "false") << "\n";
    if (ck.has_streams) {
        write_stream(man, "data", ck.streams.data);
        write_stream(man, "init", ck.streams.init);
        write_stream(man, "noise", ck.streams.noise);
        write_stream(man, "select", ck.streams.select);
        write_stream(man, "eval", ck.streams.eval);
    }
    man << "pool.present = " << (ck.has_pool ? "true" : "false") << "\n";
    if (ck.has_pool) {
        man << "pool.rho = " << fmt_double(ck.pool.rho) << "\n";
        man << "pool.generation = " << ck.pool.generation << "\n";
    }
    man.close();

    for (const auto& [name, t] : ck.params)
        write_tensor_blob(t, (fs::path(dir) / "params" / (name + ".dkt1")).string());
    if (ck.has_opt) {
        fs::create_directories(fs::path(dir) / "opt");
        for (const auto& [name, t] : ck.opt_m)
            write_tensor_blob(t, (fs::path(dir) / "opt" / (name + ".m.dkt1")).string());
        for (const auto& [name, t] : ck.opt_v)
            write_tensor_blob(t, (fs::path(dir) / "opt" / (name + ".v.dkt1")).string());
    }
    if (ck.has_pool) {
        fs::create_directories(fs::path(dir) / "pool");
        write_tensor_blob(ck.pool.states, (fs::path(dir) / "pool" / "states.dkt1").string());
        write_int_blob(ck.pool.ts, (fs::path(dir) / "pool" / "ts.bin").string());
    }
}

Checkpoint load_checkpoint(const std::string& dir, const DenoiserSpec* expected) {
    const fs::path man_path = fs::path(dir) / "manifest.txt";
    if (!fs::exists(man_path)) throw FormatError("no checkpoint manifest at " + man_path.string());
    KeyValueConfig kv = KeyValueConfig::parse_file(man_path.string());
    const auto version = kv.get_int("format_version");
    if (version != kFormatVersion)
        throw FormatError("checkpoint format version " + std::to_string(version) + " unsupported (expected " +
                          std::to_string(kFormatVersion) + ") in " + dir);
    Checkpoint ck;
    ck.spec.arch = arch_from_name(kv.get_string("arch"));
    ck.spec.input_dims = kv.get_size_list("input_dims");
    ck.spec.hidden = kv.get_size_list("hidden");
    ck.spec.time_dim = static_cast<std::size_t>(kv.get_uint("time_dim"));
    ck.spec.validate();
    if (expected && !(ck.spec == *expected))
        throw FormatError("checkpoint spec mismatch in " + dir + ": stored " + arch_name(ck.spec.arch) +
                          " model does not match the requested spec");
    ck.schedule_kind = kv.get_string("schedule.kind");
    ck.schedule_T = static_cast<int>(kv.get_int("schedule.T"));
    ck.iteration = kv.get_uint("iteration");

    std::istringstream names(kv.get_string("params"));
    std::string name;
    while (std::getline(names, name, ','))
        ck.params[name] = read_tensor_blob<float>((fs::path(dir) / "params" / (name + ".dkt1")).string());

    ck.has_opt = kv.get_bool("opt.present", false);
    if (ck.has_opt) {
        ck.opt_step = kv.get_uint("opt.step");
        ck.opt_cfg.lr = kv.get_double("opt.lr");
        ck.opt_cfg.beta1 = kv.get_double("opt.beta1");
        ck.opt_cfg.beta2 = kv.get_double("opt.beta2");
        ck.opt_cfg.eps = kv.get_double("opt.eps");
        for (const auto& [pname, t] : ck.params) {
            (void)t;
            ck.opt_m[pname] = read_tensor_blob<float>((fs::path(dir) / "opt" / (pname + ".m.dkt1")).string());
            ck.opt_v[pname] = read_tensor_blob<float>((fs::path(dir) / "opt" / (pname + ".v.dkt1")).string());
        }
    }
    ck.has_streams = kv.get_bool("rng.present", false);
    if (ck.has_streams) {
        ck.streams.data = read_stream(kv, "data");
        ck.streams.init = read_stream(kv, "init");
        ck.streams.noise = read_stream(kv, "noise");
        ck.streams.select = read_stream(kv, "select");
        ck.streams.eval = read_stream(kv, "eval");
    }
    ck.has_pool = kv.get_bool("pool.present", false);
    if (ck.has_pool) {
        ck.pool.rho = kv.get_double("pool.rho");
        ck.pool.generation = kv.get_uint("pool.generation");
        ck.pool.states = read_tensor_blob<float>((fs::path(dir) / "pool" / "states.dkt1").string());
        ck.pool.ts = read_int_blob((fs::path(dir) / "pool" / "ts.bin").string());
        if (ck.pool.states.rank() == 0 || ck.pool.states.dims[0] != ck.pool.ts.size())
            throw FormatError("checkpoint pool state/level size mismatch in " + dir);
    }
    return ck;
}

DenoiserModel<float> model_from_checkpoint(const Checkpoint& ck) {
    return DenoiserModel<float>(ck.spec, ck.params);
}

NoiseSchedule schedule_from_checkpoint(const Checkpoint& ck) {
    if (ck.schedule_kind != "linear") throw FormatError("unknown schedule kind: " + ck.schedule_kind);
    return NoiseSchedule::linear(ck.schedule_T);
}

}  // namespace dd
