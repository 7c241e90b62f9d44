#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "avraeval/dataset.hpp"
#include "avraeval/game_state.hpp"
#include "avraeval/inference.hpp"

namespace avraeval::metrics {

// Lowercased whitespace split; punctuation stays inside tokens.
std::vector<std::string> tokenize(std::string_view text);

enum class BleuSmoothing {
  // (matches + 1) / (total + 1) for orders 2..4.
  AddOne,
  None,
};

inline constexpr int kBleuMaxOrder = 4;

// Sentence BLEU, orders 1..4, uniform weights, brevity penalty.
double bleu(std::string_view candidate, std::string_view reference,
            BleuSmoothing smoothing = BleuSmoothing::AddOne);
double bleu_tokens(std::span<const std::string> candidate, std::span<const std::string> reference,
                   BleuSmoothing smoothing = BleuSmoothing::AddOne);

// Corpus BLEU: clipped counts and lengths pooled over all pairs before the
// precisions are formed.
double corpus_bleu(const std::vector<std::pair<std::string, std::string>>& candidate_reference,
                   BleuSmoothing smoothing = BleuSmoothing::AddOne);

// F1 over clipped n-gram overlap; 0 when either side has no n-grams.
double rouge_n(std::string_view candidate, std::string_view reference, int n);
double rouge_n_tokens(std::span<const std::string> candidate, std::span<const std::string> reference, int n);

// F1 from the longest common token subsequence.
double rouge_l(std::string_view candidate, std::string_view reference);
double rouge_l_tokens(std::span<const std::string> candidate, std::span<const std::string> reference);

// exp(-mean(logprobs)); absent for an empty sequence.
std::optional<double> perplexity(std::span<const double> token_logprobs);

struct EvalRow {
  std::string run_id;
  std::string instance_id;
  std::string record_id;
  std::string model_name;
  int template_id = 0;
  std::optional<std::string> extracted_command;
  std::string gold_command;
  bool format_pass = false;
  ReferenceOutcome reference;
  double bleu = 0.0;
  double rouge1_f1 = 0.0;
  double rouge2_f1 = 0.0;
  double rougeL_f1 = 0.0;
  std::optional<double> perplexity;

  bool operator==(const EvalRow&) const = default;
};

nlohmann::json to_json(const EvalRow& row);
std::optional<EvalRow> row_from_json(const nlohmann::json& j);

// extract -> format check -> parse -> reference check -> similarity against
// the gold command -> perplexity.
EvalRow score_row(const inference::GenerationResult& result, const FireballRecord& record,
                  BleuSmoothing smoothing = BleuSmoothing::AddOne);

// Row for a result whose record is unknown: scored as no_command.
EvalRow score_orphan(const inference::GenerationResult& result);

struct GroupSummary {
  std::string model_name;
  int template_id = 0;
  std::size_t rows = 0;
  double format_rate = 0.0;
  double reference_rate = 0.0;
  std::optional<double> mean_perplexity;
  double mean_rouge1 = 0.0;
  double mean_rouge2 = 0.0;
  double mean_rougeL = 0.0;
  double mean_bleu = 0.0;
  std::map<Verdict, std::size_t> verdict_counts;
};

struct ReportSummary {
  std::vector<GroupSummary> groups;  // sorted by (model_name, template_id)
  std::vector<std::string> run_ids;
};

struct AggregateOptions {
  // Replace the mean of sentence BLEU with corpus BLEU per group.
  bool corpus_bleu = false;
  BleuSmoothing smoothing = BleuSmoothing::AddOne;
};

ReportSummary aggregate(const std::vector<EvalRow>& rows, const AggregateOptions& options = {});

// Columns: model,prompt,format,reference,perplexity,rouge1,rouge2,rougeL,bleu
void write_csv(std::ostream& out, const ReportSummary& summary);

// Reference-check bars per prompt and model, plus every group in full.
nlohmann::json figure_json(const ReportSummary& summary);

}  // namespace avraeval::metrics
