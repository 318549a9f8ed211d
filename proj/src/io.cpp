#include "hurdlemix/io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

#include "hurdlemix/errors.hpp"

namespace hurdlemix {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv(const std::string& line) {
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
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return out;
}

std::string where(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line) + ": ";
}

std::uint64_t parse_count(const std::string& field, const std::string& at) {
  if (field.empty()) throw DataError(at + "empty count");
  if (field[0] == '-') throw DataError(at + "negative count '" + field + "'");
  std::uint64_t v = 0;
  const char* end = field.data() + field.size();
  auto [p, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc() || p != end) {
    throw DataError(at + "count '" + field + "' is not a non-negative integer");
  }
  return v;
}

// Maps ids of one level to dense indices.
class Level {
 public:
  void see(const std::string& id) {
    if (index_.emplace(id, order_.size()).second) order_.push_back(id);
  }
  void finalize() {
    bool numeric = !order_.empty();
    std::vector<std::pair<long long, std::string>> keyed;
    for (const auto& id : order_) {
      long long v = 0;
      auto [p, ec] = std::from_chars(id.data(), id.data() + id.size(), v);
      if (ec != std::errc() || p != id.data() + id.size()) {
        numeric = false;
        break;
      }
      keyed.emplace_back(v, id);
    }
    if (numeric) {
      std::stable_sort(keyed.begin(), keyed.end());
      order_.clear();
      for (auto& [v, id] : keyed) order_.push_back(id);
    }
    for (std::size_t k = 0; k < order_.size(); ++k) index_[order_[k]] = k;
  }
  std::size_t operator[](const std::string& id) const { return index_.at(id); }
  std::size_t size() const { return order_.size(); }
  const std::string& name(std::size_t k) const { return order_[k]; }

 private:
  std::map<std::string, std::size_t> index_;
  std::vector<std::string> order_;
};

struct Row {
  std::size_t line;
  std::string subject, process, time;
  std::uint64_t count;
};

void check_header(const std::vector<std::string>& got, const std::vector<std::string>& want,
                  const std::string& source) {
  if (got.size() < want.size() ||
      !std::equal(want.begin(), want.end(), got.begin())) {
    std::string w;
    for (const auto& s : want) w += (w.empty() ? "" : ",") + s;
    throw DataError(where(source, 1) + "header must start with " + w);
  }
}

Json hyper_to_json(const Hyperparams& h) {
  return Json{{"alpha", h.alpha},     {"beta", h.beta},       {"zeta", h.zeta},
              {"eta", h.eta},         {"lambda", h.lambda},   {"gamma_M", h.gamma_M},
              {"gamma_S", h.gamma_S}, {"Lambda_M", h.Lambda_M}, {"Lambda_S", h.Lambda_S}};
}

template <class T>
std::vector<int> shift_labels(const T& labels, int by) {
  std::vector<int> out;
  for (int v : labels) out.push_back(v + by);
  return out;
}

}  // namespace

DataFormat data_format_from_string(const std::string& s) {
  if (s == "long") return DataFormat::long_format;
  if (s == "wide") return DataFormat::wide_format;
  throw std::invalid_argument("unknown data format '" + s + "' (long|wide)");
}

CountDataset read_dataset(std::istream& in, DataFormat format, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(source + ": empty file");
  const auto header = split_csv(line);
  std::vector<Row> rows;
  Level subjects, processes, times;
  std::size_t lineno = 1;

  if (format == DataFormat::long_format) {
    check_header(header, {"subject_id", "process", "time", "count"}, source);
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const auto f = split_csv(line);
      const std::string at = where(source, lineno);
      if (f.size() != 4) {
        throw DataError(at + "expected 4 fields, found " + std::to_string(f.size()));
      }
      rows.push_back({lineno, f[0], f[1], f[2], parse_count(f[3], at)});
    }
  } else {
    check_header(header, {"subject_id", "time"}, source);
    if (header.size() < 3) throw DataError(where(source, 1) + "no process columns");
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const auto f = split_csv(line);
      const std::string at = where(source, lineno);
      if (f.size() != header.size()) {
        throw DataError(at + "expected " + std::to_string(header.size()) + " fields, found " +
                        std::to_string(f.size()));
      }
      for (std::size_t k = 2; k < f.size(); ++k) {
        rows.push_back({lineno, f[0], header[k], f[1], parse_count(f[k], at)});
      }
    }
  }
  if (rows.empty()) throw DataError(source + ": no data rows");
  for (const auto& r : rows) {
    if (r.subject.empty() || r.process.empty() || r.time.empty()) {
      throw DataError(where(source, r.line) + "empty identifier");
    }
    subjects.see(r.subject);
    processes.see(r.process);
    times.see(r.time);
  }
  subjects.finalize();
  processes.finalize();
  times.finalize();
  const std::size_t n = subjects.size(), d = processes.size(), T = times.size();
  std::vector<std::uint64_t> counts(n * d * T);
  std::vector<std::size_t> seen_at(n * d * T, 0);
  for (const auto& r : rows) {
    const std::size_t k = (subjects[r.subject] * d + processes[r.process]) * T + times[r.time];
    if (seen_at[k] != 0) {
      throw DataError(where(source, r.line) + "duplicate cell (subject " + r.subject +
                      ", process " + r.process + ", time " + r.time + "), first at line " +
                      std::to_string(seen_at[k]));
    }
    seen_at[k] = r.line;
    counts[k] = r.count;
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      for (std::size_t t = 0; t < T; ++t) {
        if (seen_at[(i * d + j) * T + t] == 0) {
          throw DataError(source + ": missing cell (subject " + subjects.name(i) +
                          ", process " + processes.name(j) + ", time " + times.name(t) +
                          "); complete data are required");
        }
      }
    }
  }
  return CountDataset(n, d, T, std::move(counts));
}

CountDataset load_dataset(const fs::path& path, DataFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return read_dataset(in, format, path.string());
}

void write_dataset(std::ostream& out, const CountDataset& data, DataFormat format) {
  if (format == DataFormat::long_format) {
    out << "subject_id,process,time,count\n";
    for (std::size_t i = 0; i < data.n(); ++i) {
      for (std::size_t j = 0; j < data.d(); ++j) {
        for (std::size_t t = 0; t < data.T(); ++t) {
          out << i + 1 << ',' << j + 1 << ',' << t + 1 << ',' << data(i, j, t) << '\n';
        }
      }
    }
    return;
  }
  out << "subject_id,time";
  for (std::size_t j = 0; j < data.d(); ++j) out << ',' << j + 1;
  out << '\n';
  for (std::size_t i = 0; i < data.n(); ++i) {
    for (std::size_t t = 0; t < data.T(); ++t) {
      out << i + 1 << ',' << t + 1;
      for (std::size_t j = 0; j < data.d(); ++j) out << ',' << data(i, j, t);
      out << '\n';
    }
  }
}

void save_dataset(const fs::path& path, const CountDataset& data, DataFormat format) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_dataset(out, data, format);
}

void RunConfig::check() const {
  chain_config({}).check();
  const auto report = validate(hyperparams);
  if (!report.ok()) throw std::invalid_argument("invalid hyperparameters: " + report.message());
  if (m_nb_mode.kind == MnbMode::Kind::monte_carlo && m_nb_mode.nsamples == 0) {
    throw std::invalid_argument("m_nb_samples must be >= 1");
  }
}

ChainConfig RunConfig::chain_config(std::vector<int> fixed) const {
  ChainConfig c;
  c.iters = iters;
  c.burnin = burnin;
  c.thin = thin;
  c.seed = seed;
  c.fixed_outer = std::move(fixed);
  return c;
}

Json to_json(const RunConfig& config) {
  return Json{
      {"algorithm", to_string(config.algorithm)},
      {"hyperparams", hyper_to_json(config.hyperparams)},
      {"iters", config.iters},
      {"burnin", config.burnin},
      {"thin", config.thin},
      {"seed", config.seed},
      {"m_nb_mode",
       config.m_nb_mode.kind == MnbMode::Kind::truncated ? "truncated" : "monte_carlo"},
      {"m_nb_samples", config.m_nb_mode.nsamples},
      {"fixed_outer", config.fixed_outer},
  };
}

RunConfig run_config_from_json(const Json& j) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  RunConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "algorithm") {
        c.algorithm = algorithm_from_string(v.get<std::string>());
      } else if (key == "hyperparams") {
        if (!v.is_object()) throw std::invalid_argument("hyperparams must be an object");
        Hyperparams& h = c.hyperparams;
        const std::map<std::string, double*> fields{
            {"alpha", &h.alpha},     {"beta", &h.beta},         {"zeta", &h.zeta},
            {"eta", &h.eta},         {"lambda", &h.lambda},     {"gamma_M", &h.gamma_M},
            {"gamma_S", &h.gamma_S}, {"Lambda_M", &h.Lambda_M}, {"Lambda_S", &h.Lambda_S}};
        for (const auto& [hk, hv] : v.items()) {
          auto it = fields.find(hk);
          if (it == fields.end()) throw std::invalid_argument("unknown hyperparameter '" + hk + "'");
          *it->second = hv.get<double>();
        }
      } else if (key == "iters") {
        c.iters = v.get<std::uint64_t>();
      } else if (key == "burnin") {
        c.burnin = v.get<std::uint64_t>();
      } else if (key == "thin") {
        c.thin = v.get<std::uint64_t>();
      } else if (key == "seed") {
        c.seed = v.get<std::uint64_t>();
      } else if (key == "m_nb_mode") {
        const auto s = v.get<std::string>();
        if (s == "truncated") {
          c.m_nb_mode.kind = MnbMode::Kind::truncated;
        } else if (s == "monte_carlo") {
          c.m_nb_mode.kind = MnbMode::Kind::monte_carlo;
        } else {
          throw std::invalid_argument("m_nb_mode must be truncated or monte_carlo");
        }
      } else if (key == "m_nb_samples") {
        c.m_nb_mode.nsamples = v.get<std::size_t>();
      } else if (key == "fixed_outer") {
        c.fixed_outer = v.is_null() ? std::string() : v.get<std::string>();
      } else {
        throw std::invalid_argument("unknown config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad config value: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

std::vector<int> load_partition(const fs::path& path, std::size_t n) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open partition file " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("partition file " + path.string() + " is not valid JSON");
  }
  if (j.is_object()) j = j.value("outer", Json());
  if (!j.is_array()) throw DataError(path.string() + ": expected an array of labels");
  std::vector<int> labels;
  for (const auto& v : j) {
    if (!v.is_number_integer() || v.get<long long>() < 1) {
      throw DataError(path.string() + ": labels must be integers >= 1");
    }
    labels.push_back(v.get<int>() - 1);
  }
  if (labels.size() != n) {
    throw DataError(path.string() + ": " + std::to_string(labels.size()) +
                    " labels for " + std::to_string(n) + " subjects");
  }
  int next = 0;
  for (int v : labels) {
    if (v > next) throw DataError(path.string() + ": labels must be contiguous in order of first appearance");
    if (v == next) ++next;
  }
  return labels;
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t dataset_hash(const CountDataset& data) {
  std::ostringstream os;
  write_dataset(os, data, DataFormat::long_format);
  return fnv1a(os.str());
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Json to_json(const TraceRecord& rec) {
  Json j{{"iter", rec.iteration}, {"K", rec.K}};
  if (!rec.components.empty() || rec.M > 0) {
    j["M"] = rec.M;
    j["S"] = rec.S;
  }
  j["K_inner"] = rec.K_inner;
  j["c"] = shift_labels(rec.c, 1);
  j["z"] = shift_labels(rec.z, 1);
  j["loglik"] = rec.loglik;
  j["log_marginal"] = rec.log_marginal;
  j["u_bar"] = rec.u_bar;
  j["u"] = rec.u;
  if (!rec.components.empty()) {
    Json comps = Json::array();
    for (const auto& od : rec.components) {
      Json inner = Json::array();
      for (const auto& ic : od.inner) {
        inner.push_back({{"w", ic.weight}, {"r", ic.r_star}, {"theta", ic.theta_star}});
      }
      comps.push_back({{"p", od.p_star}, {"inner", inner}});
    }
    j["components"] = comps;
  }
  return j;
}

TraceRecord trace_record_from_json(const Json& j) {
  TraceRecord rec;
  rec.iteration = j.at("iter").get<std::uint64_t>();
  rec.K = j.at("K").get<std::size_t>();
  rec.M = j.value("M", std::size_t{0});
  if (j.contains("S")) rec.S = j.at("S").get<std::vector<std::size_t>>();
  rec.K_inner = j.at("K_inner").get<std::vector<std::size_t>>();
  rec.c = shift_labels(j.at("c").get<std::vector<int>>(), -1);
  rec.z = shift_labels(j.at("z").get<std::vector<int>>(), -1);
  rec.loglik = j.at("loglik").get<double>();
  rec.log_marginal = j.at("log_marginal").get<double>();
  rec.u_bar = j.at("u_bar").get<double>();
  rec.u = j.at("u").get<std::vector<double>>();
  if (j.contains("components")) {
    for (const auto& jc : j.at("components")) {
      OuterDraw od;
      od.p_star = jc.at("p").get<std::vector<double>>();
      for (const auto& ji : jc.at("inner")) {
        od.inner.push_back({ji.at("w").get<double>(), ji.at("r").get<std::vector<std::uint32_t>>(),
                            ji.at("theta").get<std::vector<double>>()});
      }
      rec.components.push_back(std::move(od));
    }
  }
  return rec;
}

Json to_json(const GroundTruth& truth) {
  Json outer = Json::array();
  for (const auto& o : truth.outer) {
    Json inner = Json::array();
    for (const auto& s : o.inner) {
      inner.push_back({{"weight", s.weight}, {"r", s.r_star}, {"theta", s.theta_star}});
    }
    outer.push_back({{"weight", o.weight}, {"p", o.p_star}, {"inner", inner}});
  }
  return Json{{"n", truth.n}, {"d", truth.d}, {"T", truth.T}, {"components", outer}};
}

Json to_json(const SyntheticData& sim) {
  return Json{{"outer", shift_labels(sim.outer, 1)}, {"inner", shift_labels(sim.inner, 1)}};
}

TraceWriter::TraceWriter(const fs::path& dir, const RunConfig& config, const CountDataset& data)
    : dir_(dir) {
  fs::create_directories(dir);
  trace_.open(dir / "trace.jsonl", std::ios::binary | std::ios::trunc);
  if (!trace_) throw std::runtime_error("cannot write " + (dir / "trace.jsonl").string());
  const Json cfg = to_json(config);
  manifest_ = Json{{"version", kVersion},
                   {"algorithm", to_string(config.algorithm)},
                   {"config", cfg},
                   {"config_hash", hex64(fnv1a(cfg.dump()))},
                   {"dataset_hash", hex64(dataset_hash(data))},
                   {"seed", config.seed},
                   {"n", data.n()},
                   {"d", data.d()},
                   {"T", data.T()}};
}

void TraceWriter::write(const TraceRecord& rec) {
  trace_ << to_json(rec).dump() << '\n';
  trace_.flush();
  ++kept_;
}

void TraceWriter::finish(double wall_seconds, bool interrupted) {
  trace_.close();
  manifest_["records"] = kept_;
  manifest_["interrupted"] = interrupted;
  manifest_["wall_time_seconds"] = wall_seconds;
  std::ofstream out(dir_ / "manifest.json", std::ios::binary | std::ios::trunc);
  out << manifest_.dump(2) << '\n';
}

TraceDirectory read_trace_directory(const fs::path& dir) {
  TraceDirectory out;
  {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw DataError("no manifest.json in " + dir.string());
    try {
      out.manifest = Json::parse(in);
    } catch (const nlohmann::json::exception&) {
      throw DataError((dir / "manifest.json").string() + " is not valid JSON");
    }
  }
  try {
    out.trace.algorithm = algorithm_from_string(out.manifest.at("algorithm").get<std::string>());
    out.trace.n = out.manifest.at("n").get<std::size_t>();
    out.trace.d = out.manifest.at("d").get<std::size_t>();
  } catch (const std::exception& e) {
    throw DataError("manifest in " + dir.string() + " is incomplete: " + e.what());
  }
  std::ifstream in(dir / "trace.jsonl", std::ios::binary);
  if (!in) throw DataError("no trace.jsonl in " + dir.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const bool last = in.peek() == std::char_traits<char>::eof();
    try {
      out.trace.records.push_back(trace_record_from_json(Json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      if (last && in.eof()) break;  // unterminated final line
      throw DataError(where((dir / "trace.jsonl").string(), lineno) + e.what());
    }
  }
  return out;
}

}  // namespace hurdlemix
