#include "autohead/report.hpp"

#include <cstdio>
#include <sstream>

namespace autohead::report {

std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * fraction);
  return buf;
}

std::string percent(const std::optional<double>& fraction) { return fraction ? percent(*fraction) : "-"; }

namespace {

using Grid = std::vector<std::vector<std::string>>;

template <class F>
double mean_over(const ExperimentReport& r, std::size_t method, F value) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t p = 0; p < r.problems.size(); ++p) {
    if (!r.present[p][method]) continue;
    s += value(r.cells[p][method]);
    ++n;
  }
  return n == 0 ? 0.0 : s / static_cast<double>(n);
}

std::string cell(const ExperimentReport& r, std::size_t p, std::size_t m, std::string (*fmt)(const metrics::EvalReport&)) {
  return r.present[p][m] ? fmt(r.cells[p][m]) : "-";
}

std::string csv(const Grid& g) {
  std::ostringstream os;
  for (const auto& row : g) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
    os << '\n';
  }
  return os.str();
}

std::string markdown(const Grid& g) {
  std::ostringstream os;
  for (std::size_t r = 0; r < g.size(); ++r) {
    os << '|';
    for (const auto& c : g[r]) os << ' ' << c << " |";
    os << '\n';
    if (r == 0) {
      os << '|';
      for (std::size_t i = 0; i < g[r].size(); ++i) os << (i == 0 ? " --- |" : " ---: |");
      os << '\n';
    }
  }
  return os.str();
}

Grid table1(const ExperimentReport& r) {
  Grid g;
  std::vector<std::string> header{"Problem"};
  for (const auto& m : r.methods) {
    header.push_back(m + " Acc");
    header.push_back(m + " AUC");
  }
  g.push_back(header);
  for (std::size_t p = 0; p < r.problems.size(); ++p) {
    std::vector<std::string> row{r.problems[p]};
    for (std::size_t m = 0; m < r.methods.size(); ++m) {
      row.push_back(cell(r, p, m, [](const metrics::EvalReport& e) { return percent(e.accuracy); }));
      row.push_back(cell(r, p, m, [](const metrics::EvalReport& e) { return percent(e.auc); }));
    }
    g.push_back(row);
  }
  std::vector<std::string> mean{"mean"};
  for (std::size_t m = 0; m < r.methods.size(); ++m) {
    mean.push_back(percent(r.mean_accuracy(m)));
    mean.push_back(percent(r.mean_auc(m)));
  }
  g.push_back(mean);
  return g;
}

Grid table2(const ExperimentReport& r) {
  Grid g;
  std::vector<std::string> header{"Metric", "Problem"};
  for (const auto& m : r.methods) header.push_back(m);
  g.push_back(header);
  for (const char* metric : {"TPR", "TNR"}) {
    const bool tpr = metric[1] == 'P';
    for (std::size_t p = 0; p < r.problems.size(); ++p) {
      std::vector<std::string> row{metric, r.problems[p]};
      for (std::size_t m = 0; m < r.methods.size(); ++m) {
        row.push_back(tpr ? cell(r, p, m, [](const metrics::EvalReport& e) { return percent(e.tpr); })
                          : cell(r, p, m, [](const metrics::EvalReport& e) { return percent(e.tnr); }));
      }
      g.push_back(row);
    }
  }
  std::vector<std::string> avg{"Average Accuracy", "all"};
  for (std::size_t m = 0; m < r.methods.size(); ++m) avg.push_back(percent(r.mean_average_accuracy(m)));
  g.push_back(avg);
  return g;
}

}  // namespace

double ExperimentReport::mean_accuracy(std::size_t m) const {
  return mean_over(*this, m, [](const metrics::EvalReport& e) { return e.accuracy; });
}

std::optional<double> ExperimentReport::mean_auc(std::size_t m) const {
  for (std::size_t p = 0; p < problems.size(); ++p) {
    if (present[p][m] && !cells[p][m].auc) return std::nullopt;
  }
  return mean_over(*this, m, [](const metrics::EvalReport& e) { return *e.auc; });
}

double ExperimentReport::mean_tpr(std::size_t m) const {
  return mean_over(*this, m, [](const metrics::EvalReport& e) { return e.tpr; });
}

double ExperimentReport::mean_tnr(std::size_t m) const {
  return mean_over(*this, m, [](const metrics::EvalReport& e) { return e.tnr; });
}

double ExperimentReport::mean_average_accuracy(std::size_t m) const { return (mean_tpr(m) + mean_tnr(m)) / 2.0; }

std::string table1_csv(const ExperimentReport& r) { return csv(table1(r)); }
std::string table1_markdown(const ExperimentReport& r) { return markdown(table1(r)); }
std::string table2_csv(const ExperimentReport& r) { return csv(table2(r)); }
std::string table2_markdown(const ExperimentReport& r) { return markdown(table2(r)); }

}  // namespace autohead::report
