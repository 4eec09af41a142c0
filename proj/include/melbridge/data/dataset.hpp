#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace melbridge::data {

/// One (frame, audio clip) pair cut from a source video or generated
/// synthetically. Paths are stored relative to the manifest file so a dataset
/// directory can be moved wholesale.
struct Example {
    std::string id;         ///< unique within a manifest
    std::string frame_ref;  ///< image path, or a descriptor the synthetic encoder understands
    std::string audio_ref;  ///< WAV path
    std::string label;      ///< class name, must appear in the manifest vocabulary
    std::string split;      ///< "train", "test", or "unsplit"
    double timestamp = 0;   ///< seconds into the source video (0 for synthetic data)
};

bool valid_split_tag(const std::string& tag);

/// Ordered example list plus the label vocabulary and enough provenance
/// (source, seed, split ratio) to regenerate or audit the dataset.
struct DatasetManifest {
    std::vector<Example> examples;
    std::vector<std::string> labels;  ///< vocabulary, insertion order
    std::string source;               ///< e.g. "synthetic" or a video collection name
    std::uint64_t seed = 0;
    double train_ratio = 0;  ///< 0 until split() has been applied

    /// Unique ids, known labels, valid split tags; throws on violation.
    void validate() const;

    std::size_t count_split(const std::string& tag) const;
    std::vector<const Example*> split_view(const std::string& tag) const;
};

/// Text format, one record per line:
///
///   # melbridge manifest v1
///   # source=<name>  # seed=<n>  # train_ratio=<r>  # labels=<a,b,c>
///   id <TAB> frame <TAB> audio <TAB> label <TAB> split <TAB> timestamp
///
/// Fields must not contain tabs or newlines. Unknown "# key=value" headers are
/// ignored so the format can grow.
void save_manifest(const std::string& path, const DatasetManifest& m);
DatasetManifest load_manifest(const std::string& path);

inline constexpr const char* kPhotoTemplate = "a photo of [label]";
inline constexpr const char* kSoundTemplate = "the sound of [label]";

/// Substitutes "[label]" in the template; rejects empty labels and templates
/// without the placeholder.
std::string make_pseudo_text(const std::string& label, const std::string& tmpl = kPhotoTemplate);

/// Retags every example: a seeded shuffle of indices, then the first
/// floor(ratio * n) become "train" and the rest "test". Example order in the
/// manifest is preserved; only the tags change. ratio must lie in (0, 1).
void split(DatasetManifest& m, double ratio, std::uint64_t seed);

}  // namespace melbridge::data
