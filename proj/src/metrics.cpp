#include "tae/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "tae/error.hpp"

namespace tae {
namespace {

using nlohmann::json;
using EdgeKey = std::pair<std::string, std::string>;

std::set<std::string> node_set(const ProvenanceGraph& g) { return {g.nodes.begin(), g.nodes.end()}; }

std::set<EdgeKey> edge_set(const ProvenanceGraph& g) {
  std::set<EdgeKey> s;
  for (const auto& e : g.edges) s.insert(std::minmax(e.a, e.b));
  return s;
}

template <typename T>
std::size_t common(const std::set<T>& a, const std::set<T>& b) {
  std::size_t n = 0;
  for (const auto& x : a) n += b.count(x);
  return n;
}

// 2|C∩G| / (|C| + |G|), the harmonic mean of precision and recall.
double f1(std::size_t hits, std::size_t n_cand, std::size_t n_gt) {
  if (hits == 0) return 0.0;
  return 2.0 * static_cast<double>(hits) / static_cast<double>(n_cand + n_gt);
}

void require_nodes(const ProvenanceGraph& gt) {
  if (gt.nodes.empty()) throw InvalidCase("ground truth graph has no nodes");
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

json score_json(const GraphScore& s) { return {{"vo", s.vo}, {"eo", s.eo}, {"veo", s.veo}}; }

}  // namespace

double vertex_overlap(const ProvenanceGraph& gt, const ProvenanceGraph& cand) {
  require_nodes(gt);
  const auto g = node_set(gt), c = node_set(cand);
  return f1(common(g, c), c.size(), g.size());
}

double edge_overlap(const ProvenanceGraph& gt, const ProvenanceGraph& cand) {
  require_nodes(gt);
  const auto g = edge_set(gt), c = edge_set(cand);
  if (g.empty()) return c.empty() ? 1.0 : 0.0;
  return f1(common(g, c), c.size(), g.size());
}

double vertex_edge_overlap(const ProvenanceGraph& gt, const ProvenanceGraph& cand) {
  require_nodes(gt);
  const auto gn = node_set(gt), cn = node_set(cand);
  const auto ge = edge_set(gt), ce = edge_set(cand);
  return f1(common(gn, cn) + common(ge, ce), cn.size() + ce.size(), gn.size() + ge.size());
}

GraphScore score_graph(const ProvenanceGraph& gt, const ProvenanceGraph& cand) {
  return {vertex_overlap(gt, cand), edge_overlap(gt, cand), vertex_edge_overlap(gt, cand)};
}

BatchScore score_batch(const std::vector<ScoreCase>& cases) {
  if (cases.empty()) throw InvalidInput("no cases to score");
  BatchScore out;
  for (const auto& c : cases) out.cases.push_back({c.case_id, score_graph(c.gt, c.cand)});
  const double n = static_cast<double>(cases.size());
  for (const auto& c : out.cases) {
    out.mean.vo += c.score.vo;
    out.mean.eo += c.score.eo;
    out.mean.veo += c.score.veo;
  }
  out.mean.vo /= n;
  out.mean.eo /= n;
  out.mean.veo /= n;
  for (const auto& c : out.cases) {
    out.stddev.vo += (c.score.vo - out.mean.vo) * (c.score.vo - out.mean.vo);
    out.stddev.eo += (c.score.eo - out.mean.eo) * (c.score.eo - out.mean.eo);
    out.stddev.veo += (c.score.veo - out.mean.veo) * (c.score.veo - out.mean.veo);
  }
  out.stddev.vo = std::sqrt(out.stddev.vo / n);
  out.stddev.eo = std::sqrt(out.stddev.eo / n);
  out.stddev.veo = std::sqrt(out.stddev.veo / n);
  return out;
}

std::string report_csv(const BatchScore& batch) {
  std::ostringstream out;
  out << "case_id,vo,eo,veo\n";
  for (const auto& c : batch.cases) {
    out << c.case_id << ',' << fmt(c.score.vo) << ',' << fmt(c.score.eo) << ',' << fmt(c.score.veo) << '\n';
  }
  return out.str();
}

json summary_json(const BatchScore& batch) {
  return {{"means", score_json(batch.mean)},
          {"stddevs", score_json(batch.stddev)},
          {"n_cases", batch.cases.size()}};
}

}  // namespace tae
