#include "nagpipe/trace_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "nagpipe/errors.hpp"

namespace nagpipe {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::string opt_field(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) throw ValidationError("bad number in " + what + ": '" + s + "'");
  return v;
}

long parse_long(const std::string& s, const std::string& what) {
  long v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) throw ValidationError("bad integer in " + what + ": '" + s + "'");
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

void write_trace_csv(const std::filesystem::path& path, const std::string& echo,
                     const TrainingTrace& trace) {
  auto out = open_out(path);
  out << echo << "step,stage,loss,lr,gamma,update_count,weight_hash\n";
  for (const auto& r : trace.rows) {
    out << r.step << ',' << r.stage << ',' << format_double(r.loss) << ',' << format_double(r.lr)
        << ',' << format_double(r.gamma) << ',' << r.update_count << ',' << hex64(r.weight_hash)
        << '\n';
  }
}

void write_probes(const std::filesystem::path& path, const std::string& echo,
                  const TrainingTrace& trace) {
  auto out = open_out(path);
  out << echo;
  for (const auto& p : trace.probes) {
    out << "t=" << p.step << " stage=" << p.stage << " kind=" << p.kind;
    for (double v : p.values) out << ' ' << format_double(v);
    out << '\n';
  }
}

std::string format_metrics_row(const MetricsRow& r) {
  return std::to_string(r.step) + ',' + std::to_string(r.stage) + ',' + format_double(r.gap_rmse) +
         ',' + opt_field(r.cos_align) + ',' + opt_field(r.delay_identity_residual) + ',' +
         opt_field(r.suboptimality);
}

void write_metrics_csv(const std::filesystem::path& path, const std::string& echo,
                       const std::vector<MetricsRow>& rows) {
  auto out = open_out(path);
  out << echo << "step,stage,gap_rmse,cos_align,delay_identity_residual,suboptimality\n";
  for (const auto& r : rows) out << format_metrics_row(r) << '\n';
}

CommentedFile read_commented_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  CommentedFile f;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header && line.rfind("# ", 0) == 0) {
      f.echo.push_back(line.substr(2));
      continue;
    }
    header = false;
    if (!line.empty()) f.body.push_back(line);
  }
  return f;
}

std::vector<TraceRow> parse_trace_rows(const CommentedFile& file) {
  std::vector<TraceRow> rows;
  if (file.body.empty() || file.body.front() != "step,stage,loss,lr,gamma,update_count,weight_hash") {
    throw ValidationError("trace.csv: missing header");
  }
  for (std::size_t k = 1; k < file.body.size(); ++k) {
    const auto f = split(file.body[k], ',');
    if (f.size() != 7) throw ValidationError("trace.csv: row " + std::to_string(k) + " has " +
                                             std::to_string(f.size()) + " fields");
    TraceRow r{};
    r.step = parse_long(f[0], "trace.csv");
    r.stage = static_cast<std::size_t>(parse_long(f[1], "trace.csv"));
    r.loss = parse_double(f[2], "trace.csv");
    r.lr = parse_double(f[3], "trace.csv");
    r.gamma = parse_double(f[4], "trace.csv");
    r.update_count = parse_long(f[5], "trace.csv");
    r.weight_hash = std::stoull(f[6], nullptr, 16);
    rows.push_back(r);
  }
  return rows;
}

std::vector<ProbeRecord> parse_probes(const CommentedFile& file) {
  std::vector<ProbeRecord> out;
  for (const auto& line : file.body) {
    std::istringstream in(line);
    std::string t, stage, kind, tok;
    in >> t >> stage >> kind;
    if (t.rfind("t=", 0) != 0 || stage.rfind("stage=", 0) != 0 || kind.rfind("kind=", 0) != 0 ||
        kind.size() != 6) {
      throw ValidationError("probes: malformed line '" + line.substr(0, 40) + "'");
    }
    ProbeRecord p;
    p.step = parse_long(t.substr(2), "probes");
    p.stage = static_cast<std::size_t>(parse_long(stage.substr(6), "probes"));
    p.kind = kind[5];
    while (in >> tok) p.values.push_back(parse_double(tok, "probes"));
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace nagpipe
