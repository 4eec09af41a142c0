#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

#include "melbridge/cond/embedding.hpp"
#include "melbridge/dsp/audio.hpp"
#include "melbridge/dsp/mel.hpp"

namespace melbridge::eval {

/// Cosine similarity in [-1, 1]; throws on dim mismatch or zero vectors.
double relevance_score(const std::vector<float>& audio_emb, const std::vector<float>& query_emb);

/// Scores one audio window against a query.
using WindowScorer =
    std::function<double(const dsp::AudioClip& window, const std::vector<float>& query)>;

struct WindowScores {
    std::vector<double> scores;  ///< one per full window, in time order
    double max = 0, mean = 0, min = 0;
};

/// Slides a window_s-second window by hop_s over the clip and scores every
/// full window: floor((len - window) / hop) + 1 of them. The clip must be at
/// least one window long.
WindowScores sliding_window_scores(const dsp::AudioClip& clip, const std::vector<float>& query,
                                   double window_s, double hop_s, const WindowScorer& scorer);

struct CosineRow {
    std::string variant;
    double mean_cos = 0;
    std::size_t count = 0;
};

/// Mean cosine between the conditioning embedding a variant actually used and
/// the ground-truth image embedding, one row per variant.
CosineRow cosine_gap_row(const std::string& variant,
                         const std::vector<std::pair<cond::QueryEmbedding, cond::QueryEmbedding>>& pairs);

/// Built-in audio embedding: per mel band the mean, standard deviation, and
/// mean absolute frame-to-frame delta of the normalized log-mel values, giving
/// 3 * n_mels dims (192 at the default 64 bands). Deterministic; heavyweight
/// learned backbones plug in through the embedding-store file interface.
std::vector<float> audio_embedding_backbone(const dsp::AudioClip& clip,
                                            const dsp::MelConfig& cfg = {});

inline constexpr const char* kBuiltinBackboneName = "builtin-melstats";

/// Desk-scale stand-in for a joint audio-text embedding model: ridge
/// regression from the builtin audio statistics onto the class query
/// embeddings of a labeled dataset. score() is then the cosine between the
/// mapped audio and any query vector, and works as a WindowScorer.
class FittedRelevanceScorer {
public:
    /// One training item per clip: its audio statistics and the query
    /// embedding of its class.
    static FittedRelevanceScorer fit(const std::vector<std::vector<float>>& audio_stats,
                                     const std::vector<std::vector<float>>& targets,
                                     double ridge = 1e-3);

    std::vector<float> embed(const dsp::AudioClip& clip) const;
    double score(const dsp::AudioClip& clip, const std::vector<float>& query) const;
    WindowScorer scorer() const;

    const dsp::MelConfig& mel_config() const { return mel_cfg_; }

private:
    Eigen::MatrixXd w_;  // targets_dim x stats_dim
    dsp::MelConfig mel_cfg_;
};

}  // namespace melbridge::eval
