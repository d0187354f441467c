#include "miso/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "miso/errors.hpp"

namespace miso {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::vector<const RunResult*> sorted(const std::vector<RunResult>& runs) {
  std::vector<const RunResult*> out;
  out.reserve(runs.size());
  for (const auto& r : runs) out.push_back(&r);
  std::stable_sort(out.begin(), out.end(), [](const RunResult* a, const RunResult* b) { return a->key < b->key; });
  return out;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

std::string fixed(double v, int digits) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, digits);
  return std::string(buf, res.ptr);
}

std::string run_label(const RunKey& key) {
  return std::string(to_string(key.algorithm)) + " tau=" + std::to_string(key.tau) +
         " c=" + format_double(key.multiplier) + " seed=" + std::to_string(key.seed);
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

}  // namespace

void write_csv(const std::vector<RunResult>& runs, std::ostream& out) {
  out << kCsvHeader << '\n';
  for (const RunResult* r : sorted(runs)) {
    const std::string prefix = std::string(to_string(r->key.algorithm)) + ',' + std::to_string(r->key.tau) + ',' +
                               format_double(r->key.multiplier) + ',' + std::to_string(r->key.seed) + ',';
    for (const TraceRow& row : r->trace) {
      out << prefix << row.k << ',' << row.grad_evals << ',' << format_double(row.epochs) << ','
          << format_double(row.dist_sq_ratio) << ',' << format_double(row.subopt) << ','
          << format_double(row.grad_norm_sq) << ',' << format_double(row.lyapunov) << ',' << row.wall_ns << '\n';
    }
  }
}

void write_summary(const ExperimentResult& result, std::ostream& out) {
  out << "algo,tau,multiplier,seed,L,L_f,mu,A,B,gamma,inner_length,epochs_to_target,diverged,sampled_iterate,"
         "final_k\n";
  for (const RunResult* r : sorted(result.runs)) {
    const auto& c = r->constants;
    out << to_string(r->key.algorithm) << ',' << r->key.tau << ',' << format_double(r->key.multiplier) << ','
        << r->key.seed << ',' << format_double(c.L) << ',' << format_double(c.L_f) << ',' << format_double(c.mu)
        << ',' << format_double(c.A) << ',' << format_double(c.B) << ',' << format_double(c.gamma) << ','
        << c.inner_length << ','
        << (r->epochs_to_target ? format_double(*r->epochs_to_target) : std::string("none")) << ','
        << (r->diverged ? 1 : 0) << ',' << r->sampled_iterate << ','
        << (r->trace.empty() ? 0 : r->trace.back().k) << '\n';
  }
  out << '\n' << "selection_algo,selection_tau,best_multiplier,mean_epochs,all_reached\n";
  for (const auto& s : result.selections) {
    out << to_string(s.algorithm) << ',' << s.tau << ',' << format_double(s.multiplier) << ','
        << format_double(s.mean_epochs) << ',' << (s.all_reached ? 1 : 0) << '\n';
  }
}

void write_svg(const std::vector<RunResult>& runs, std::ostream& out, const std::string& title) {
  constexpr double kWidth = 960.0;
  constexpr double kHeight = 600.0;
  constexpr double kLeft = 80.0;
  constexpr double kRight = 220.0;
  constexpr double kTop = 40.0;
  constexpr double kBottom = 60.0;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;

  const auto order = sorted(runs);
  double max_epochs = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const RunResult* r : order) {
    for (const TraceRow& row : r->trace) {
      if (!(row.dist_sq_ratio > 0.0) || !std::isfinite(row.dist_sq_ratio)) continue;
      max_epochs = std::max(max_epochs, row.epochs);
      const double e = std::log10(row.dist_sq_ratio);
      lo = std::min(lo, e);
      hi = std::max(hi, e);
    }
  }
  if (!std::isfinite(lo)) {
    lo = -1.0;
    hi = 0.0;
  }
  lo = std::floor(lo);
  hi = std::ceil(hi);
  if (hi <= lo) hi = lo + 1.0;
  if (max_epochs <= 0.0) max_epochs = 1.0;
  auto sx = [&](double epochs) { return kLeft + plot_w * epochs / max_epochs; };
  auto sy = [&](double log_ratio) { return kTop + plot_h * (hi - log_ratio) / (hi - lo); };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 960 600\" width=\"960\" height=\"600\">\n";
  out << "<g font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<text x=\"" << fixed(kLeft + plot_w / 2, 1) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
      << xml_escape(title) << "</text>\n";
  // Axes and ticks.
  out << "<line x1=\"" << fixed(kLeft, 1) << "\" y1=\"" << fixed(kTop + plot_h, 1) << "\" x2=\""
      << fixed(kLeft + plot_w, 1) << "\" y2=\"" << fixed(kTop + plot_h, 1) << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << fixed(kLeft, 1) << "\" y1=\"" << fixed(kTop, 1) << "\" x2=\"" << fixed(kLeft, 1)
      << "\" y2=\"" << fixed(kTop + plot_h, 1) << "\" stroke=\"black\"/>\n";
  const int span = static_cast<int>(hi - lo);
  const int step = std::max(1, span / 10);
  for (int e = static_cast<int>(lo); e <= static_cast<int>(hi); e += step) {
    const double y = sy(e);
    out << "<line x1=\"" << fixed(kLeft - 5, 1) << "\" y1=\"" << fixed(y, 1) << "\" x2=\"" << fixed(kLeft, 1)
        << "\" y2=\"" << fixed(y, 1) << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << fixed(kLeft - 8, 1) << "\" y=\"" << fixed(y + 4, 1) << "\" text-anchor=\"end\">1e"
        << e << "</text>\n";
  }
  for (int t = 0; t <= 5; ++t) {
    const double epochs = max_epochs * t / 5.0;
    const double x = sx(epochs);
    out << "<line x1=\"" << fixed(x, 1) << "\" y1=\"" << fixed(kTop + plot_h, 1) << "\" x2=\"" << fixed(x, 1)
        << "\" y2=\"" << fixed(kTop + plot_h + 5, 1) << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << fixed(x, 1) << "\" y=\"" << fixed(kTop + plot_h + 20, 1)
        << "\" text-anchor=\"middle\">" << format_double(std::round(epochs * 100.0) / 100.0) << "</text>\n";
  }
  out << "<text x=\"" << fixed(kLeft + plot_w / 2, 1) << "\" y=\"" << fixed(kHeight - 15, 1)
      << "\" text-anchor=\"middle\">epochs</text>\n";
  out << "<text x=\"20\" y=\"" << fixed(kTop + plot_h / 2, 1) << "\" text-anchor=\"middle\" transform=\"rotate(-90 20 "
      << fixed(kTop + plot_h / 2, 1) << ")\">||x - x*||^2 / ||x0 - x*||^2</text>\n";

  std::size_t index = 0;
  for (const RunResult* r : order) {
    const char* color = kPalette[index % std::size(kPalette)];
    std::string d;
    for (const TraceRow& row : r->trace) {
      if (!(row.dist_sq_ratio > 0.0) || !std::isfinite(row.dist_sq_ratio)) continue;
      d += d.empty() ? "M" : " L";
      d += fixed(sx(row.epochs), 2) + ' ' + fixed(sy(std::log10(row.dist_sq_ratio)), 2);
    }
    if (!d.empty()) {
      out << "<path d=\"" << d << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
    }
    const double ly = kTop + 10.0 + 18.0 * static_cast<double>(index);
    const double lx = kLeft + plot_w + 15.0;
    out << "<line x1=\"" << fixed(lx, 1) << "\" y1=\"" << fixed(ly, 1) << "\" x2=\"" << fixed(lx + 20, 1)
        << "\" y2=\"" << fixed(ly, 1) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << fixed(lx + 26, 1) << "\" y=\"" << fixed(ly + 4, 1) << "\">" << xml_escape(run_label(r->key))
        << "</text>\n";
    ++index;
  }
  out << "</g>\n</svg>\n";
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << contents;
  if (!out) throw ConfigError("write failed for '" + path + "'");
}

}  // namespace miso
