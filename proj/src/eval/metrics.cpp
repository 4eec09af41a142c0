#include "melbridge/eval/metrics.hpp"

#include "melbridge/eval/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace melbridge::eval {

double relevance_score(const std::vector<float>& audio_emb, const std::vector<float>& query_emb) {
    if (audio_emb.size() != query_emb.size())
        throw std::invalid_argument("relevance: dims differ, " + std::to_string(audio_emb.size()) +
                                    " vs " + std::to_string(query_emb.size()));
    if (audio_emb.empty()) throw std::invalid_argument("relevance: empty embeddings");
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < audio_emb.size(); ++i) {
        dot += static_cast<double>(audio_emb[i]) * query_emb[i];
        na += static_cast<double>(audio_emb[i]) * audio_emb[i];
        nb += static_cast<double>(query_emb[i]) * query_emb[i];
    }
    if (na == 0 || nb == 0) throw std::invalid_argument("relevance: zero-norm embedding");
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

WindowScores sliding_window_scores(const dsp::AudioClip& clip, const std::vector<float>& query,
                                   double window_s, double hop_s, const WindowScorer& scorer) {
    dsp::validate(clip);
    if (window_s <= 0 || hop_s <= 0)
        throw std::invalid_argument("window and hop must be positive");
    const std::size_t win = static_cast<std::size_t>(std::llround(window_s * clip.sample_rate));
    const std::size_t hop = static_cast<std::size_t>(std::llround(hop_s * clip.sample_rate));
    if (win == 0 || hop == 0) throw std::invalid_argument("window and hop must span samples");
    if (clip.samples.size() < win)
        throw std::invalid_argument("clip is shorter than one scoring window (" +
                                    std::to_string(clip.duration_s()) + " s < " +
                                    std::to_string(window_s) + " s)");

    WindowScores out;
    const std::size_t n_windows = (clip.samples.size() - win) / hop + 1;
    out.scores.reserve(n_windows);
    dsp::AudioClip window;
    window.sample_rate = clip.sample_rate;
    for (std::size_t w = 0; w < n_windows; ++w) {
        const std::size_t start = w * hop;
        window.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(start),
                              clip.samples.begin() + static_cast<std::ptrdiff_t>(start + win));
        out.scores.push_back(scorer(window, query));
    }
    out.max = *std::max_element(out.scores.begin(), out.scores.end());
    out.min = *std::min_element(out.scores.begin(), out.scores.end());
    out.mean = std::accumulate(out.scores.begin(), out.scores.end(), 0.0) /
               static_cast<double>(out.scores.size());
    return out;
}

CosineRow cosine_gap_row(
    const std::string& variant,
    const std::vector<std::pair<cond::QueryEmbedding, cond::QueryEmbedding>>& pairs) {
    if (pairs.empty())
        throw std::invalid_argument("cosine table row \"" + variant + "\" has no pairs");
    double sum = 0;
    for (const auto& [query, truth] : pairs) sum += cond::cosine(query.vector, truth.vector);
    return {variant, sum / static_cast<double>(pairs.size()), pairs.size()};
}

std::vector<float> audio_embedding_backbone(const dsp::AudioClip& clip, const dsp::MelConfig& cfg) {
    const dsp::MelSpectrogram mel = dsp::compute_mel(clip, cfg);
    const int bands = mel.n_mels, frames = mel.n_frames;
    std::vector<float> out(static_cast<std::size_t>(3 * bands));
    for (int b = 0; b < bands; ++b) {
        double sum = 0;
        for (int f = 0; f < frames; ++f) sum += mel.at(b, f);
        const double mean = sum / frames;
        double var = 0, dsum = 0;
        for (int f = 0; f < frames; ++f) {
            const double d = mel.at(b, f) - mean;
            var += d * d;
            if (f > 0) dsum += std::abs(static_cast<double>(mel.at(b, f)) - mel.at(b, f - 1));
        }
        out[static_cast<std::size_t>(b)] = static_cast<float>(mean);
        out[static_cast<std::size_t>(bands + b)] =
            static_cast<float>(std::sqrt(var / std::max(1, frames - 1)));
        out[static_cast<std::size_t>(2 * bands + b)] =
            static_cast<float>(frames > 1 ? dsum / (frames - 1) : 0.0);
    }
    return out;
}

FittedRelevanceScorer FittedRelevanceScorer::fit(const std::vector<std::vector<float>>& audio_stats,
                                                 const std::vector<std::vector<float>>& targets,
                                                 double ridge) {
    if (audio_stats.size() != targets.size() || audio_stats.empty())
        throw std::invalid_argument("relevance fit needs matching, nonempty stats/target lists");
    if (ridge < 0) throw std::invalid_argument("negative ridge");

    const Eigen::MatrixXd x = stack_embeddings(audio_stats);
    const Eigen::MatrixXd y = stack_embeddings(targets);
    const Eigen::Index d = x.cols();
    // W^T = (X^T X + ridge I)^-1 X^T Y, solved by LDLT on the normal equations.
    const Eigen::MatrixXd gram =
        x.transpose() * x + ridge * Eigen::MatrixXd::Identity(d, d);
    FittedRelevanceScorer s;
    s.w_ = gram.ldlt().solve(x.transpose() * y).transpose();
    return s;
}

std::vector<float> FittedRelevanceScorer::embed(const dsp::AudioClip& clip) const {
    const std::vector<float> stats = audio_embedding_backbone(clip, mel_cfg_);
    if (static_cast<Eigen::Index>(stats.size()) != w_.cols())
        throw std::invalid_argument("audio statistics dim " + std::to_string(stats.size()) +
                                    " does not match the fitted map (" + std::to_string(w_.cols()) +
                                    ")");
    Eigen::VectorXd v(w_.cols());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = stats[static_cast<std::size_t>(i)];
    const Eigen::VectorXd mapped = w_ * v;
    std::vector<float> out(static_cast<std::size_t>(mapped.size()));
    for (Eigen::Index i = 0; i < mapped.size(); ++i)
        out[static_cast<std::size_t>(i)] = static_cast<float>(mapped[i]);
    return out;
}

double FittedRelevanceScorer::score(const dsp::AudioClip& clip,
                                    const std::vector<float>& query) const {
    return relevance_score(embed(clip), query);
}

WindowScorer FittedRelevanceScorer::scorer() const {
    return [this](const dsp::AudioClip& window, const std::vector<float>& query) {
        return score(window, query);
    };
}

}  // namespace melbridge::eval
