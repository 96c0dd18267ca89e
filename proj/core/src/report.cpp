#include <algorithm>
#include <fstream>
#include <set>

#include "qaprompt/error.hpp"
#include "qaprompt/harness.hpp"

namespace qap {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

// Highest mean ROUGE-L F1 over k; the smaller k wins a tie.
const AggregateRow& best_by_rouge_l(std::span<const AggregateRow> rows) {
  const AggregateRow* best = &rows.front();
  for (const auto& r : rows) {
    if (r.mean.rougeL.f1 > best->mean.rougeL.f1) best = &r;
  }
  return *best;
}

std::string markdown_row(const std::vector<std::string>& cells) {
  std::string out = "|";
  for (const auto& c : cells) out += " " + c + " |";
  return out + "\n";
}

std::string markdown_rule(std::size_t n) {
  std::string out = "|";
  for (std::size_t i = 0; i < n; ++i) out += "---|";
  return out + "\n";
}

}  // namespace

Report build_report(const RunManifest& manifest) {
  Report report;
  if (manifest.rows.empty()) throw EmptyInput();

  const GroupBy overall_by{.method = true, .model = true, .k = true};
  const auto overall = aggregate(manifest.rows, overall_by);
  report.overall_csv = aggregate_csv(overall, overall_by);

  report.overall_markdown = "## Best k\n\n";
  report.overall_markdown += markdown_row({"Method", "Model", "Best k", "n", "ROUGE-1", "ROUGE-2", "ROUGE-L"});
  report.overall_markdown += markdown_rule(7);
  for (std::size_t i = 0; i < overall.size();) {
    std::size_t j = i;
    while (j < overall.size() && overall[j].method == overall[i].method && overall[j].model == overall[i].model) ++j;
    const auto& best = best_by_rouge_l(std::span(overall).subspan(i, j - i));
    report.overall_markdown += markdown_row(
        {std::string(to_string(*best.method)), *best.model,
         best.method == Method::kQa ? std::to_string(*best.k) : "-", std::to_string(best.n),
         format_score(best.mean.rouge1.f1), format_score(best.mean.rouge2.f1), format_score(best.mean.rougeL.f1)});
    i = j;
  }
  report.overall_markdown += "\n## All k\n\n";
  report.overall_markdown += markdown_row({"Method", "Model", "k", "n", "ROUGE-1", "ROUGE-2", "ROUGE-L"});
  report.overall_markdown += markdown_rule(7);
  for (const auto& r : overall) {
    report.overall_markdown += markdown_row({std::string(to_string(*r.method)), *r.model, std::to_string(*r.k),
                                             std::to_string(r.n), format_score(r.mean.rouge1.f1),
                                             format_score(r.mean.rouge2.f1), format_score(r.mean.rougeL.f1)});
  }

  const GroupBy domain_by{.domain = true, .k = true};
  report.domain_k_csv = aggregate_csv(aggregate(manifest.rows, domain_by), domain_by);

  std::map<std::string, std::size_t> counts{{"ok", 0}, {"fallback", 0}, {"failed", 0}};
  for (const auto& r : manifest.rows) ++counts[std::string(to_string(r.parse_status))];
  report.parse_status_csv = "parse_status,count\n";
  report.parse_status_markdown = markdown_row({"Parse status", "Count"}) + markdown_rule(2);
  for (const auto* status : {"ok", "fallback", "failed"}) {
    report.parse_status_csv += std::string(status) + "," + std::to_string(counts[status]) + "\n";
    report.parse_status_markdown += markdown_row({status, std::to_string(counts[status])});
  }
  return report;
}

Report cmd_report(const fs::path& manifest_path, const fs::path& out_dir) {
  const auto report = build_report(load_manifest_file(manifest_path));
  fs::create_directories(out_dir);
  write_text(out_dir / "overall.md", report.overall_markdown);
  write_text(out_dir / "overall.csv", report.overall_csv);
  write_text(out_dir / "domain_k.csv", report.domain_k_csv);
  write_text(out_dir / "parse_status.csv", report.parse_status_csv);
  write_text(out_dir / "parse_status.md", report.parse_status_markdown);
  return report;
}

Comparison compare_manifests(std::span<const RunManifest> manifests) {
  if (manifests.size() < 2) throw InvalidArgument("compare needs at least two manifests");
  const auto reference_ids = manifests.front().eval_ids();
  for (std::size_t i = 1; i < manifests.size(); ++i) {
    if (manifests[i].eval_ids() != reference_ids)
      throw MismatchedEvalSets("'" + manifests[i].label + "' was scored on different instances than '" +
                               manifests.front().label + "'");
  }

  Comparison cmp;
  cmp.baseline_label = manifests.front().label;
  std::set<std::string> domains;
  for (const auto& m : manifests) {
    if (m.rows.empty()) throw EmptyInput();
    const auto by_k = aggregate(m.rows, GroupBy{.k = true});
    const auto& best = best_by_rouge_l(by_k);
    ComparisonRow row;
    row.label = m.label;
    row.method = m.rows.front().method;
    row.model = m.rows.front().model;
    row.best_k = *best.k;
    row.n = best.n;
    row.mean = best.mean;
    std::vector<ScoreRow> at_k;
    for (const auto& r : m.rows) {
      if (r.k == row.best_k) at_k.push_back(r);
    }
    for (const auto& d : aggregate(at_k, GroupBy{.domain = true})) {
      row.domain_rouge_l[*d.domain] = d.mean.rougeL.f1;
      domains.insert(*d.domain);
    }
    cmp.rows.push_back(std::move(row));
  }
  const double base = cmp.rows.front().mean.rougeL.f1;
  for (auto& r : cmp.rows) {
    if (base != 0.0) r.delta_percent = (r.mean.rougeL.f1 - base) / base * 100.0;
  }
  const auto base_domains = cmp.rows.front().domain_rouge_l;
  std::stable_sort(cmp.rows.begin(), cmp.rows.end(), [](const ComparisonRow& a, const ComparisonRow& b) {
    return a.mean.rougeL.f1 > b.mean.rougeL.f1;
  });

  cmp.markdown = "## Overall (baseline: " + cmp.baseline_label + ")\n\n";
  cmp.markdown += markdown_row({"Run", "Method", "Model", "Best k", "n", "ROUGE-1", "ROUGE-2", "ROUGE-L", "Delta ROUGE-L"});
  cmp.markdown += markdown_rule(9);
  cmp.csv = "run,method,model,best_k,n,r1_f,r2_f,rl_f,delta_rl_percent\n";
  for (const auto& r : cmp.rows) {
    const auto delta = format_delta_percent(base, r.mean.rougeL.f1);
    cmp.markdown += markdown_row({r.label, std::string(to_string(r.method)), r.model, std::to_string(r.best_k),
                                  std::to_string(r.n), format_score(r.mean.rouge1.f1),
                                  format_score(r.mean.rouge2.f1), format_score(r.mean.rougeL.f1), delta});
    cmp.csv += r.label + "," + std::string(to_string(r.method)) + "," + r.model + "," +
               std::to_string(r.best_k) + "," + std::to_string(r.n) + "," + format_score(r.mean.rouge1.f1) +
               "," + format_score(r.mean.rouge2.f1) + "," + format_score(r.mean.rougeL.f1) + "," + delta + "\n";
  }

  cmp.markdown += "\n## ROUGE-L by domain\n\n";
  std::vector<std::string> header{"Domain"};
  for (const auto& r : cmp.rows) {
    header.push_back(r.label);
    header.push_back("Delta " + r.label);
  }
  cmp.markdown += markdown_row(header) + markdown_rule(header.size());
  for (const auto& d : domains) {
    std::vector<std::string> cells{d};
    const double b = base_domains.count(d) ? base_domains.at(d) : 0.0;
    for (const auto& r : cmp.rows) {
      const double v = r.domain_rouge_l.count(d) ? r.domain_rouge_l.at(d) : 0.0;
      cells.push_back(format_score(v));
      cells.push_back(format_delta_percent(b, v));
    }
    cmp.markdown += markdown_row(cells);
  }
  return cmp;
}

Comparison cmd_compare(std::span<const fs::path> paths, const fs::path& out) {
  std::vector<RunManifest> manifests;
  for (const auto& p : paths) {
    manifests.push_back(load_manifest_file(p));
    if (manifests.back().label.empty()) manifests.back().label = p.parent_path().filename().string();
  }
  auto cmp = compare_manifests(manifests);
  if (!out.empty()) {
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_text(out, cmp.markdown);
    auto csv_path = out;
    csv_path.replace_extension(".csv");
    if (csv_path == out) csv_path += ".csv";
    write_text(csv_path, cmp.csv);
  }
  return cmp;
}

}  // namespace qap
