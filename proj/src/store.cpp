#include "mass/store.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <functional>
#include <sstream>

#include <fmt/format.h>

#include "json.hpp"
#include "mass/errors.hpp"

namespace mass {

using json = nlohmann::json;

namespace {

// ------------------------------------------------------------ config fields

struct Field {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

template <class T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ContractError(fmt::format("config: bad value '{}' for key '{}'", text, key));
  return value;
}

template <class T>
Field number_field(const char* key, T RunConfig::*member) {
  return {key, [member](const RunConfig& c) { return fmt::format("{}", c.*member); },
          [key, member](RunConfig& c, std::string_view v) { c.*member = parse_number<T>(key, v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> all = [] {
    std::vector<Field> f;
    f.push_back(number_field("candidates", &RunConfig::candidates));
    f.push_back(number_field("attempts", &RunConfig::attempts));
    f.push_back(number_field("inner_steps", &RunConfig::inner_steps));
    f.push_back(number_field("inner_lr", &RunConfig::inner_lr));
    f.push_back(number_field("block_size", &RunConfig::block_size));
    f.push_back(number_field("meta_steps", &RunConfig::meta_steps));
    f.push_back(number_field("warmup_steps", &RunConfig::warmup_steps));
    f.push_back(number_field("meta_batch", &RunConfig::meta_batch));
    f.push_back({"outer", [](const RunConfig& c) { return std::string(to_string(c.outer)); },
                 [](RunConfig& c, std::string_view v) { c.outer = parse_outer_variant(v); }});
    f.push_back({"backend", [](const RunConfig& c) { return std::string(to_string(c.backend)); },
                 [](RunConfig& c, std::string_view v) { c.backend = parse_backend(v); }});
    f.push_back(number_field("gamma", &RunConfig::gamma));
    f.push_back(number_field("clip", &RunConfig::clip));
    f.push_back(number_field("parse_penalty", &RunConfig::parse_penalty));
    f.push_back(number_field("scorer_lr", &RunConfig::scorer_lr));
    f.push_back(number_field("generator_lr", &RunConfig::generator_lr));
    f.push_back(number_field("adam_beta1", &RunConfig::adam_beta1));
    f.push_back(number_field("adam_beta2", &RunConfig::adam_beta2));
    f.push_back(number_field("adam_eps", &RunConfig::adam_eps));
    f.push_back(number_field("gen_temperature", &RunConfig::gen_temperature));
    f.push_back(number_field("attempt_temperature", &RunConfig::attempt_temperature));
    f.push_back(number_field("max_new_tokens", &RunConfig::max_new_tokens));
    f.push_back(number_field("test_examples", &RunConfig::test_examples));
    f.push_back(number_field("pretrain_steps", &RunConfig::pretrain_steps));
    f.push_back(number_field("pretrain_batch", &RunConfig::pretrain_batch));
    f.push_back(number_field("pretrain_lr", &RunConfig::pretrain_lr));
    f.push_back(number_field("min_modulus", &RunConfig::min_modulus));
    f.push_back(number_field("max_modulus", &RunConfig::max_modulus));
    f.push_back(number_field("demos", &RunConfig::demos));
    f.push_back(number_field("train_tasks", &RunConfig::train_tasks));
    f.push_back(number_field("eval_tasks", &RunConfig::eval_tasks));
    f.push_back(number_field("train_seed_offset", &RunConfig::train_seed_offset));
    f.push_back(number_field("eval_seed_offset", &RunConfig::eval_seed_offset));
    f.push_back(number_field("width", &RunConfig::width));
    f.push_back(number_field("blocks", &RunConfig::blocks));
    f.push_back(number_field("heads", &RunConfig::heads));
    f.push_back(number_field("context", &RunConfig::context));
    f.push_back(number_field("ffn_mult", &RunConfig::ffn_mult));
    f.push_back(number_field("lora_rank", &RunConfig::lora_rank));
    f.push_back(number_field("lora_scale", &RunConfig::lora_scale));
    f.push_back(number_field("scorer_width", &RunConfig::scorer_width));
    f.push_back(number_field("scorer_heads", &RunConfig::scorer_heads));
    f.push_back(number_field("scorer_context", &RunConfig::scorer_context));
    f.push_back(number_field("scorer_ffn_mult", &RunConfig::scorer_ffn_mult));
    f.push_back(number_field("seed", &RunConfig::seed));
    f.push_back(number_field("threads", &RunConfig::threads));
    return f;
  }();
  return all;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// ------------------------------------------------------------ binary codec

constexpr char kMagic[8] = {'M', 'A', 'S', 'S', 'C', 'K', 'P', 'T'};

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u64(s.size());
    out_.append(s);
  }
  void params(const ParamVector& p) {
    u64(p.num_segments());
    for (std::size_t i = 0; i < p.num_segments(); ++i) {
      str(p.name(i));
      u32(static_cast<std::uint32_t>(p[i].rows));
      u32(static_cast<std::uint32_t>(p[i].cols));
      for (double x : p[i].data) f64(x);
    }
  }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(std::string_view bytes, std::string_view source) : in_(bytes), source_(source) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u64();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  ParamVector params() {
    const auto n = u64();
    if (n > 100000) fail("implausible segment count");
    std::vector<SegmentShape> shapes;
    std::vector<std::vector<double>> data;
    for (std::uint64_t s = 0; s < n; ++s) {
      SegmentShape shape;
      shape.name = str();
      shape.rows = static_cast<int>(u32());
      shape.cols = static_cast<int>(u32());
      need(shape.size() * 8);
      std::vector<double> values(shape.size());
      for (double& x : values) x = f64();
      shapes.push_back(std::move(shape));
      data.push_back(std::move(values));
    }
    ParamVector p(make_layout(std::move(shapes)));
    for (std::size_t s = 0; s < data.size(); ++s) p[s].data = std::move(data[s]);
    return p;
  }
  bool done() const { return pos_ == in_.size(); }

  [[noreturn]] void fail(const std::string& what) const {
    throw IoError(fmt::format("{}: corrupt checkpoint ({})", source_, what));
  }

 private:
  void need(std::uint64_t n) const {
    if (n > in_.size() - pos_) fail("truncated");
  }

  std::string_view in_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

// ---------------------------------------------------------------- config

std::string config_to_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += fmt::format("{} = {}\n", f.key, f.get(cfg));
  return out;
}

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(cfg, trim(value));
      return;
    }
  }
  throw ContractError(fmt::format("config: unknown key '{}'", key));
}

RunConfig config_from_text(std::string_view text) {
  RunConfig cfg;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ContractError(fmt::format("config line {}: expected 'key = value'", line_no));
    set_config_value(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return cfg;
}

void save_config(const fs::path& path, const RunConfig& cfg) { write_file_atomic(path, config_to_text(cfg)); }

RunConfig load_config(const fs::path& path) { return config_from_text(read_file(path)); }

// ---------------------------------------------------------------- files

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed for " + path.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot rename into " + path.string());
  }
}

// ---------------------------------------------------------------- tasks

std::string task_to_line(const Task& t) {
  json demos = json::array();
  for (const auto& [x, y] : t.demos) demos.push_back({x, y});
  const json j = {{"seed", t.seed},   {"a", t.rule.a},         {"b", t.rule.b},
                  {"modulus", t.rule.modulus}, {"demos", demos}, {"query", t.query},
                  {"gold", t.gold},   {"family", t.family}};
  return j.dump();
}

Task task_from_line(std::string_view line, const TaskConfig& cfg, std::size_t line_no) {
  const auto fail = [&](const std::string& what) -> IoError {
    return IoError(fmt::format("task line {}: {}", line_no, what));
  };
  try {
    const json j = json::parse(line);
    Rule rule{j.at("a").get<int>(), j.at("b").get<int>(), j.at("modulus").get<int>()};
    if (rule.modulus < 1 || rule.a < 0 || rule.b < 0) throw fail("invalid rule");
    std::vector<std::pair<int, int>> demos;
    for (const auto& d : j.at("demos")) demos.emplace_back(d.at(0).get<int>(), d.at(1).get<int>());
    const int query = j.at("query").get<int>();
    Task t = make_task(rule, std::move(demos), query, j.at("seed").get<std::uint64_t>(), cfg);
    for (const auto& [x, y] : t.demos) {
      if (y != rule.apply(x)) throw fail("demonstration violates the rule");
      if (x == query) throw fail("query appears among demonstrations");
    }
    if (t.gold != j.at("gold").get<int>()) throw fail("gold answer inconsistent with the rule");
    if (t.family != j.at("family").get<std::string>()) throw fail("family tag inconsistent with the modulus");
    return t;
  } catch (const json::exception& e) {
    throw fail(std::string("malformed record: ") + e.what());
  }
}

void save_tasks(const fs::path& path, const std::vector<Task>& tasks) {
  std::string out;
  for (const auto& t : tasks) out += task_to_line(t) + "\n";
  write_file_atomic(path, out);
}

std::vector<Task> load_tasks(const fs::path& path, const TaskConfig& cfg) {
  const std::string text = read_file(path);
  std::vector<Task> tasks;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    tasks.push_back(task_from_line(line, cfg, line_no));
  }
  return tasks;
}

// ---------------------------------------------------------------- checkpoints

bool TrainState::bit_equal(const TrainState& o) const {
  return generator.bit_equal(o.generator) && scorer.bit_equal(o.scorer) && adam.m.bit_equal(o.adam.m) &&
         adam.v.bit_equal(o.adam.v) && adam.step == o.adam.step && meta_step == o.meta_step && seed == o.seed;
}

std::string encode_checkpoint(const RunConfig& cfg, const TrainState& s) {
  Writer payload;
  payload.str(config_to_text(cfg));
  payload.i64(s.meta_step);
  payload.u64(s.seed);
  payload.params(s.generator);
  payload.params(s.scorer);
  payload.params(s.adam.m);
  payload.params(s.adam.v);
  payload.i64(s.adam.step);

  Writer file;
  file.bytes().append(kMagic, sizeof kMagic);
  file.u32(kCheckpointVersion);
  file.u64(payload.bytes().size());
  file.bytes().append(payload.bytes());
  file.u64(fnv1a(payload.bytes()));
  return std::move(file.bytes());
}

Checkpoint decode_checkpoint(std::string_view bytes, std::string_view source) {
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw IoError(fmt::format("{}: not a checkpoint (bad magic)", source));
  Reader header(bytes.substr(sizeof kMagic), source);
  const auto version = header.u32();
  if (version != kCheckpointVersion)
    throw IoError(fmt::format("{}: unsupported checkpoint version {} (expected {})", source, version,
                              kCheckpointVersion));
  const auto size = header.u64();
  const std::size_t start = sizeof kMagic + 12;
  if (size > bytes.size() - start || bytes.size() - start - size != 8) header.fail("length mismatch");
  const std::string_view payload = bytes.substr(start, size);
  Reader tail(bytes.substr(start + size), source);
  if (tail.u64() != fnv1a(payload)) header.fail("checksum mismatch");

  Reader r(payload, source);
  Checkpoint c;
  c.config = config_from_text(r.str());
  c.state.meta_step = r.i64();
  c.state.seed = r.u64();
  c.state.generator = r.params();
  c.state.scorer = r.params();
  c.state.adam.m = r.params();
  c.state.adam.v = r.params();
  c.state.adam.step = r.i64();
  if (!r.done()) r.fail("trailing bytes");
  return c;
}

void save_checkpoint(const fs::path& path, const RunConfig& cfg, const TrainState& state) {
  write_file_atomic(path, encode_checkpoint(cfg, state));
}

Checkpoint load_checkpoint(const fs::path& path) { return decode_checkpoint(read_file(path), path.string()); }

// ---------------------------------------------------------------- metrics

std::string MetricRecord::to_json() const {
  json losses = json::array();
  for (const auto& l : outer_losses) losses.push_back(l ? json(*l) : json(nullptr));
  const json j = {{"step", step},
                  {"task_seeds", task_seeds},
                  {"outer_losses", losses},
                  {"mean_reward", mean_reward},
                  {"mean_score", mean_score},
                  {"max_score", max_score},
                  {"parse_rate", parse_rate},
                  {"verified_rate", verified_rate},
                  {"zero_verified_skips", zero_verified_skips},
                  {"aux_loss", aux_loss},
                  {"solve_loss", solve_loss},
                  {"generator_loss", generator_loss},
                  {"generator_updated", generator_updated},
                  {"scorer_grad_norm", scorer_grad_norm},
                  {"retained_states", retained_states},
                  {"peak_graph_bytes", peak_graph_bytes},
                  {"fault", fault},
                  {"wall_seconds", wall_seconds}};
  return j.dump();
}

MetricRecord MetricRecord::from_json(std::string_view line) {
  const json j = json::parse(line);
  MetricRecord r;
  r.step = j.at("step").get<std::int64_t>();
  r.task_seeds = j.at("task_seeds").get<std::vector<std::uint64_t>>();
  for (const auto& l : j.at("outer_losses"))
    r.outer_losses.push_back(l.is_null() ? std::nullopt : std::optional<double>(l.get<double>()));
  r.mean_reward = j.at("mean_reward").get<double>();
  r.mean_score = j.at("mean_score").get<double>();
  r.max_score = j.at("max_score").get<double>();
  r.parse_rate = j.at("parse_rate").get<double>();
  r.verified_rate = j.at("verified_rate").get<double>();
  r.zero_verified_skips = j.at("zero_verified_skips").get<int>();
  r.aux_loss = j.at("aux_loss").get<double>();
  r.solve_loss = j.at("solve_loss").get<double>();
  r.generator_loss = j.at("generator_loss").get<double>();
  r.generator_updated = j.at("generator_updated").get<bool>();
  r.scorer_grad_norm = j.at("scorer_grad_norm").get<double>();
  r.retained_states = j.at("retained_states").get<std::int64_t>();
  r.peak_graph_bytes = j.at("peak_graph_bytes").get<std::int64_t>();
  r.fault = j.at("fault").get<std::string>();
  r.wall_seconds = j.at("wall_seconds").get<double>();
  return r;
}

bool MetricRecord::same_numbers(const MetricRecord& o) const {
  MetricRecord a = *this, b = o;
  a.wall_seconds = b.wall_seconds = 0.0;
  return a.to_json() == b.to_json();
}

MetricsLog::MetricsLog(fs::path path) : path_(std::move(path)) {
  if (fs::exists(path_)) {
    const auto existing = load(path_);
    if (!existing.empty()) last_step_ = existing.back().step;
  }
  out_.open(path_, std::ios::app);
  if (!out_) throw IoError("cannot open metrics log " + path_.string());
}

void MetricsLog::append(const MetricRecord& record) {
  if (last_step_ && record.step <= *last_step_)
    throw ContractError(fmt::format("metrics: step {} after step {}", record.step, *last_step_));
  out_ << record.to_json() << '\n';
  out_.flush();
  if (!out_) throw IoError("write failed for " + path_.string());
  last_step_ = record.step;
}

std::vector<MetricRecord> MetricsLog::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics log " + path.string());
  std::vector<MetricRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(MetricRecord::from_json(line));
    } catch (const json::exception& e) {
      throw IoError(fmt::format("{} line {}: {}", path.string(), line_no, e.what()));
    }
  }
  return out;
}

// ---------------------------------------------------------------- results

std::string results_table(const std::vector<EvalReport>& reports) {
  std::vector<std::string> families;
  for (const auto& r : reports)
    for (const auto& f : r.families)
      if (std::find(families.begin(), families.end(), f.family) == families.end()) families.push_back(f.family);

  std::string out = fmt::format("{:<12}", "method");
  for (const auto& f : families) out += fmt::format(" {:>9}", f);
  out += fmt::format(" {:>9} {:>7}\n", "all", "n");
  for (const auto& r : reports) {
    out += fmt::format("{:<12}", r.name);
    for (const auto& name : families) {
      const auto it = std::find_if(r.families.begin(), r.families.end(),
                                   [&](const FamilyAccuracy& f) { return f.family == name; });
      out += it == r.families.end() ? fmt::format(" {:>9}", "-") : fmt::format(" {:>8.1f}%", 100.0 * it->accuracy());
    }
    out += fmt::format(" {:>8.1f}% {:>7}\n", 100.0 * r.accuracy(), r.total);
  }
  return out;
}

void save_results(const fs::path& table_path, const std::vector<EvalReport>& reports) {
  json arr = json::array();
  for (const auto& r : reports) {
    json fams = json::array();
    for (const auto& f : r.families)
      fams.push_back({{"family", f.family}, {"correct", f.correct}, {"total", f.total}, {"accuracy", f.accuracy()}});
    arr.push_back({{"name", r.name},
                   {"correct", r.correct},
                   {"total", r.total},
                   {"accuracy", r.accuracy()},
                   {"fallbacks", r.fallbacks},
                   {"families", fams}});
  }
  write_file_atomic(table_path, results_table(reports));
  fs::path twin = table_path;
  twin += ".json";
  write_file_atomic(twin, arr.dump(2) + "\n");
}

std::vector<EvalReport> load_results_json(const fs::path& json_path) {
  const json arr = json::parse(read_file(json_path));
  std::vector<EvalReport> out;
  for (const auto& j : arr) {
    EvalReport r;
    r.name = j.at("name").get<std::string>();
    r.correct = j.at("correct").get<int>();
    r.total = j.at("total").get<int>();
    r.fallbacks = j.at("fallbacks").get<int>();
    for (const auto& f : j.at("families"))
      r.families.push_back({f.at("family").get<std::string>(), f.at("correct").get<int>(), f.at("total").get<int>()});
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace mass
