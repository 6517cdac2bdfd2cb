#pragma once

#include <string>
#include <vector>

#include "dualfreq/training.hpp"

namespace dualfreq {

// Fraction of samples with (score >= threshold) == label.
double accuracy(const std::vector<double>& scores, const std::vector<int>& labels,
                double threshold = 0.5);

// Mean over positives, in decreasing-score order (stable on ties), of the
// precision at that rank. ContractError when there is no positive.
double average_precision(const std::vector<double>& scores, const std::vector<int>& labels);

struct EvalReport {
  double accuracy = 0;
  double average_precision = 0;
  Index n = 0;
  double threshold = 0.5;
};

// Logits for every image, scored in chunks of `batch` spread over `threads`.
std::vector<double> score_logits(const ParameterSet<float>& params, const DetectorConfig& cfg,
                                 const Tensor<float>& images, Index batch = 64, int threads = 1);

std::vector<double> sigmoid(const std::vector<double>& logits);

EvalReport evaluate(const ParameterSet<float>& params, const DetectorConfig& cfg,
                    const ImageSet& set, int threads = 1);

std::string format_eval_csv(const EvalReport& report);  // header accuracy,ap,n

struct PhaseSwapResult {
  double mean_prob_fake_phase = 0;  // |real| amplitude with fake phase
  double mean_prob_fake_amp = 0;    // |fake| amplitude with real phase
  Index n = 0;
};

// Pairs n shuffled real images with n shuffled fake images of `set`.
PhaseSwapResult phase_swap_experiment(const ParameterSet<float>& params, const DetectorConfig& cfg,
                                      const ImageSet& set, Index n, std::uint64_t seed,
                                      int threads = 1);

struct LogitHistogram {
  std::vector<double> edges;  // bins + 1
  std::vector<Index> real, fake;
  double overlap = 0;  // sum over bins of min(real share, fake share)
};

LogitHistogram logit_histogram(const std::vector<double>& logits, const std::vector<int>& labels,
                               Index bins);
std::string format_histogram_csv(const LogitHistogram& h);  // bin_lo,bin_hi,real_count,fake_count

struct AblationVariant {
  std::string name;
  DetectorConfig model;
};

// group: lambda | subbands | modules | fft_part | all
std::vector<AblationVariant> ablation_variants(const DetectorConfig& base, const std::string& group);

struct AblationRow {
  std::string variant;
  EvalReport report;
};

// Trains each variant from the same seed on the same corpus and scores the test split.
std::vector<AblationRow> ablation_run(const TrainConfig& base,
                                      const std::vector<AblationVariant>& variants,
                                      const std::vector<ManifestEntry>& manifest,
                                      const std::string& out_dir, int threads = 1);

std::string format_ablation_csv(const std::vector<AblationRow>& rows);  // variant,accuracy,ap,n

}  // namespace dualfreq
