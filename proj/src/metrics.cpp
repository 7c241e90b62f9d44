#include "avraeval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <array>
#include <set>

#include "avraeval/command.hpp"
#include "avraeval/prompts.hpp"
#include "avraeval/text.hpp"

namespace avraeval::metrics {
namespace {

using nlohmann::json;
using Tokens = std::span<const std::string>;

std::map<std::vector<std::string>, std::size_t> ngram_counts(Tokens tokens, int n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  const auto order = static_cast<std::size_t>(n);
  if (tokens.size() < order) return counts;
  for (std::size_t i = 0; i + order <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i + order))];
  }
  return counts;
}

std::size_t clipped_overlap(Tokens candidate, Tokens reference, int n) {
  const auto cand = ngram_counts(candidate, n);
  const auto ref = ngram_counts(reference, n);
  std::size_t overlap = 0;
  for (const auto& [gram, count] : cand) {
    if (auto it = ref.find(gram); it != ref.end()) overlap += std::min(count, it->second);
  }
  return overlap;
}

std::size_t ngram_total(std::size_t length, int n) {
  const auto order = static_cast<std::size_t>(n);
  return length >= order ? length - order + 1 : 0;
}

double f1(double overlap, double cand_total, double ref_total) {
  if (overlap <= 0.0 || cand_total <= 0.0 || ref_total <= 0.0) return 0.0;
  const double p = overlap / cand_total;
  const double r = overlap / ref_total;
  return 2.0 * p * r / (p + r);
}

struct BleuCounts {
  std::array<double, kBleuMaxOrder> matches{};
  std::array<double, kBleuMaxOrder> totals{};
  double cand_len = 0.0;
  double ref_len = 0.0;
};

void accumulate(BleuCounts& acc, Tokens candidate, Tokens reference) {
  for (int n = 1; n <= kBleuMaxOrder; ++n) {
    acc.matches[n - 1] += static_cast<double>(clipped_overlap(candidate, reference, n));
    acc.totals[n - 1] += static_cast<double>(ngram_total(candidate.size(), n));
  }
  acc.cand_len += static_cast<double>(candidate.size());
  acc.ref_len += static_cast<double>(reference.size());
}

double bleu_from_counts(const BleuCounts& c, BleuSmoothing smoothing) {
  if (c.cand_len <= 0.0 || c.matches[0] <= 0.0) return 0.0;
  double log_sum = 0.0;
  for (int n = 1; n <= kBleuMaxOrder; ++n) {
    double m = c.matches[n - 1];
    double t = c.totals[n - 1];
    if (n > 1 && smoothing == BleuSmoothing::AddOne) {
      m += 1.0;
      t += 1.0;
    }
    if (m <= 0.0 || t <= 0.0) return 0.0;
    log_sum += std::log(m / t);
  }
  const double bp = c.cand_len > c.ref_len ? 1.0 : std::exp(1.0 - c.ref_len / c.cand_len);
  return bp * std::exp(log_sum / kBleuMaxOrder);
}

// Order-independent mean: the values are summed in sorted order.
double stable_mean(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  long double sum = 0.0L;
  for (double v : values) sum += v;
  return static_cast<double>(sum / static_cast<long double>(values.size()));
}

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::vector<std::string> tokenize(std::string_view s) { return text::split_whitespace(text::to_lower(s)); }

double bleu_tokens(Tokens candidate, Tokens reference, BleuSmoothing smoothing) {
  BleuCounts counts;
  accumulate(counts, candidate, reference);
  return bleu_from_counts(counts, smoothing);
}

double bleu(std::string_view candidate, std::string_view reference, BleuSmoothing smoothing) {
  const auto c = tokenize(candidate);
  const auto r = tokenize(reference);
  return bleu_tokens(c, r, smoothing);
}

double corpus_bleu(const std::vector<std::pair<std::string, std::string>>& pairs, BleuSmoothing smoothing) {
  BleuCounts counts;
  for (const auto& [cand, ref] : pairs) {
    const auto c = tokenize(cand);
    const auto r = tokenize(ref);
    accumulate(counts, c, r);
  }
  return bleu_from_counts(counts, smoothing);
}

double rouge_n_tokens(Tokens candidate, Tokens reference, int n) {
  if (n < 1) return 0.0;
  return f1(static_cast<double>(clipped_overlap(candidate, reference, n)),
            static_cast<double>(ngram_total(candidate.size(), n)),
            static_cast<double>(ngram_total(reference.size(), n)));
}

double rouge_n(std::string_view candidate, std::string_view reference, int n) {
  const auto c = tokenize(candidate);
  const auto r = tokenize(reference);
  return rouge_n_tokens(c, r, n);
}

double rouge_l_tokens(Tokens candidate, Tokens reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  std::vector<std::size_t> prev(reference.size() + 1, 0);
  std::vector<std::size_t> cur(reference.size() + 1, 0);
  for (std::size_t i = 1; i <= candidate.size(); ++i) {
    for (std::size_t j = 1; j <= reference.size(); ++j) {
      cur[j] = candidate[i - 1] == reference[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return f1(static_cast<double>(prev[reference.size()]), static_cast<double>(candidate.size()),
            static_cast<double>(reference.size()));
}

double rouge_l(std::string_view candidate, std::string_view reference) {
  const auto c = tokenize(candidate);
  const auto r = tokenize(reference);
  return rouge_l_tokens(c, r);
}

std::optional<double> perplexity(std::span<const double> token_logprobs) {
  if (token_logprobs.empty()) return std::nullopt;
  long double sum = 0.0L;
  for (double lp : token_logprobs) sum += lp;
  const double mean = static_cast<double>(sum / static_cast<long double>(token_logprobs.size()));
  return std::exp(-mean);
}

EvalRow score_orphan(const inference::GenerationResult& result) {
  EvalRow row;
  row.instance_id = result.instance_id;
  row.model_name = result.model_name;
  prompts::split_instance_id(result.instance_id, row.record_id, row.template_id);
  row.extracted_command = extract_command(result.raw_text);
  row.format_pass = row.extracted_command && format_check(*row.extracted_command);
  row.reference = {Verdict::NoCommand, "no record for instance " + result.instance_id};
  if (result.token_logprobs) row.perplexity = perplexity(*result.token_logprobs);
  return row;
}

EvalRow score_row(const inference::GenerationResult& result, const FireballRecord& record,
                  BleuSmoothing smoothing) {
  EvalRow row;
  row.instance_id = result.instance_id;
  row.model_name = result.model_name;
  row.record_id = record.record_id;
  std::string ignored;
  prompts::split_instance_id(result.instance_id, ignored, row.template_id);
  row.gold_command = record.gold_command;
  row.extracted_command = extract_command(result.raw_text);

  std::optional<AvraeCommand> parsed;
  if (row.extracted_command) {
    if (auto cmd = parse_command(*row.extracted_command)) parsed = *cmd;
  }
  row.format_pass = parsed.has_value();
  row.reference = reference_check(parsed, record.current_actor, record.combat_state);

  if (row.extracted_command) {
    const auto cand = tokenize(*row.extracted_command);
    const auto ref = tokenize(record.gold_command);
    row.bleu = bleu_tokens(cand, ref, smoothing);
    row.rouge1_f1 = rouge_n_tokens(cand, ref, 1);
    row.rouge2_f1 = rouge_n_tokens(cand, ref, 2);
    row.rougeL_f1 = rouge_l_tokens(cand, ref);
  }
  if (result.token_logprobs) row.perplexity = perplexity(*result.token_logprobs);
  return row;
}

json to_json(const EvalRow& row) {
  return {{"run_id", row.run_id},
          {"instance_id", row.instance_id},
          {"record_id", row.record_id},
          {"model_name", row.model_name},
          {"template_id", row.template_id},
          {"extracted_command", row.extracted_command ? json(*row.extracted_command) : json(nullptr)},
          {"gold_command", row.gold_command},
          {"format_pass", row.format_pass},
          {"verdict", to_string(row.reference.verdict)},
          {"detail", row.reference.detail},
          {"bleu", row.bleu},
          {"rouge1_f1", row.rouge1_f1},
          {"rouge2_f1", row.rouge2_f1},
          {"rougeL_f1", row.rougeL_f1},
          {"perplexity", optional_number(row.perplexity)}};
}

std::optional<EvalRow> row_from_json(const json& j) {
  if (!j.is_object()) return std::nullopt;
  try {
    EvalRow row;
    row.run_id = j.value("run_id", "");
    row.instance_id = j.at("instance_id").get<std::string>();
    row.record_id = j.value("record_id", "");
    row.model_name = j.at("model_name").get<std::string>();
    row.template_id = j.at("template_id").get<int>();
    if (const auto e = j.find("extracted_command"); e != j.end() && e->is_string()) {
      row.extracted_command = e->get<std::string>();
    }
    row.gold_command = j.value("gold_command", "");
    row.format_pass = j.at("format_pass").get<bool>();
    const auto verdict = verdict_from_string(j.at("verdict").get<std::string>());
    if (!verdict) return std::nullopt;
    row.reference = {*verdict, j.value("detail", "")};
    row.bleu = j.at("bleu").get<double>();
    row.rouge1_f1 = j.at("rouge1_f1").get<double>();
    row.rouge2_f1 = j.at("rouge2_f1").get<double>();
    row.rougeL_f1 = j.at("rougeL_f1").get<double>();
    if (const auto p = j.find("perplexity"); p != j.end() && p->is_number()) row.perplexity = p->get<double>();
    return row;
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

ReportSummary aggregate(const std::vector<EvalRow>& rows, const AggregateOptions& options) {
  std::map<std::pair<std::string, int>, std::vector<const EvalRow*>> groups;
  std::set<std::string> run_ids;
  for (const auto& row : rows) {
    groups[{row.model_name, row.template_id}].push_back(&row);
    if (!row.run_id.empty()) run_ids.insert(row.run_id);
  }

  ReportSummary summary;
  summary.run_ids.assign(run_ids.begin(), run_ids.end());
  for (auto& [key, members] : groups) {
    GroupSummary g;
    g.model_name = key.first;
    g.template_id = key.second;
    g.rows = members.size();
    for (Verdict v : kAllVerdicts) g.verdict_counts[v] = 0;

    std::size_t format = 0;
    std::vector<double> ppl, r1, r2, rl, bl;
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto* row : members) {
      format += row->format_pass ? 1 : 0;
      ++g.verdict_counts[row->reference.verdict];
      if (row->perplexity) ppl.push_back(*row->perplexity);
      r1.push_back(row->rouge1_f1);
      r2.push_back(row->rouge2_f1);
      rl.push_back(row->rougeL_f1);
      bl.push_back(row->bleu);
      pairs.emplace_back(row->extracted_command.value_or(""), row->gold_command);
    }
    const auto n = static_cast<double>(g.rows);
    g.format_rate = static_cast<double>(format) / n;
    g.reference_rate = static_cast<double>(g.verdict_counts[Verdict::Pass]) / n;
    if (!ppl.empty()) g.mean_perplexity = stable_mean(ppl);
    g.mean_rouge1 = stable_mean(r1);
    g.mean_rouge2 = stable_mean(r2);
    g.mean_rougeL = stable_mean(rl);
    if (options.corpus_bleu) {
      std::sort(pairs.begin(), pairs.end());
      g.mean_bleu = corpus_bleu(pairs, options.smoothing);
    } else {
      g.mean_bleu = stable_mean(bl);
    }
    summary.groups.push_back(std::move(g));
  }
  return summary;
}

void write_csv(std::ostream& out, const ReportSummary& summary) {
  out << "model,prompt,format,reference,perplexity,rouge1,rouge2,rougeL,bleu\n";
  for (const auto& g : summary.groups) {
    out << csv_field(g.model_name) << ',' << g.template_id << ',' << fixed(g.format_rate) << ','
        << fixed(g.reference_rate) << ',' << (g.mean_perplexity ? fixed(*g.mean_perplexity) : "") << ','
        << fixed(g.mean_rouge1) << ',' << fixed(g.mean_rouge2) << ',' << fixed(g.mean_rougeL) << ','
        << fixed(g.mean_bleu) << '\n';
  }
}

json figure_json(const ReportSummary& summary) {
  std::set<int> prompt_ids;
  std::vector<std::string> models;
  for (const auto& g : summary.groups) {
    prompt_ids.insert(g.template_id);
    if (models.empty() || models.back() != g.model_name) models.push_back(g.model_name);
  }

  json prompts = json::array();
  for (int id : prompt_ids) prompts.push_back("Prompt" + std::to_string(id));

  json series = json::array();
  for (const auto& model : models) {
    json values = json::array();
    for (int id : prompt_ids) {
      const auto it = std::find_if(summary.groups.begin(), summary.groups.end(), [&](const GroupSummary& g) {
        return g.model_name == model && g.template_id == id;
      });
      values.push_back(it == summary.groups.end() ? json(nullptr) : json(it->reference_rate));
    }
    series.push_back({{"model", model}, {"values", values}});
  }

  json groups = json::array();
  for (const auto& g : summary.groups) {
    json verdicts = json::object();
    for (const auto& [v, count] : g.verdict_counts) verdicts[std::string(to_string(v))] = count;
    groups.push_back({{"model", g.model_name},
                      {"prompt", g.template_id},
                      {"rows", g.rows},
                      {"format", g.format_rate},
                      {"reference", g.reference_rate},
                      {"perplexity", optional_number(g.mean_perplexity)},
                      {"rouge1", g.mean_rouge1},
                      {"rouge2", g.mean_rouge2},
                      {"rougeL", g.mean_rougeL},
                      {"bleu", g.mean_bleu},
                      {"verdicts", verdicts}});
  }

  return {{"metric", "reference_rate"},
          {"run_ids", summary.run_ids},
          {"prompts", prompts},
          {"series", series},
          {"groups", groups}};
}

}  // namespace avraeval::metrics
