#include "melbridge/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "melbridge/core/io.hpp"
#include "melbridge/core/rng.hpp"

namespace melbridge::data {

namespace {

constexpr const char* kMagicLine = "# melbridge manifest v1";

void check_field(const std::string& field, const char* what, const std::string& id) {
    if (field.find('\t') != std::string::npos || field.find('\n') != std::string::npos)
        throw std::invalid_argument(std::string("manifest field ") + what + " of \"" + id +
                                    "\" contains a tab or newline");
}

[[noreturn]] void parse_fail(const std::string& path, int line, const std::string& what) {
    throw FormatError("manifest " + path + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

bool valid_split_tag(const std::string& tag) {
    return tag == "train" || tag == "test" || tag == "unsplit";
}

void DatasetManifest::validate() const {
    std::set<std::string> ids;
    std::set<std::string> vocab(labels.begin(), labels.end());
    if (vocab.size() != labels.size())
        throw std::invalid_argument("manifest label vocabulary has duplicates");
    for (const auto& e : examples) {
        if (e.id.empty()) throw std::invalid_argument("manifest has an example with an empty id");
        if (!ids.insert(e.id).second)
            throw std::invalid_argument("manifest has duplicate id \"" + e.id + "\"");
        if (!vocab.count(e.label))
            throw std::invalid_argument("example \"" + e.id + "\" has label \"" + e.label +
                                        "\" which is not in the vocabulary");
        if (!valid_split_tag(e.split))
            throw std::invalid_argument("example \"" + e.id + "\" has unknown split tag \"" +
                                        e.split + "\"");
    }
}

std::size_t DatasetManifest::count_split(const std::string& tag) const {
    return static_cast<std::size_t>(
        std::count_if(examples.begin(), examples.end(),
                      [&](const Example& e) { return e.split == tag; }));
}

std::vector<const Example*> DatasetManifest::split_view(const std::string& tag) const {
    std::vector<const Example*> out;
    for (const auto& e : examples)
        if (e.split == tag) out.push_back(&e);
    return out;
}

void save_manifest(const std::string& path, const DatasetManifest& m) {
    m.validate();
    std::ostringstream out;
    out << kMagicLine << "\n";
    out << "# source=" << m.source << "\n";
    out << "# seed=" << m.seed << "\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", m.train_ratio);
    out << "# train_ratio=" << buf << "\n";
    out << "# labels=";
    for (std::size_t i = 0; i < m.labels.size(); ++i) {
        check_field(m.labels[i], "label", m.labels[i]);
        if (m.labels[i].find(',') != std::string::npos)
            throw std::invalid_argument("label \"" + m.labels[i] + "\" contains a comma");
        out << (i ? "," : "") << m.labels[i];
    }
    out << "\n";
    for (const auto& e : m.examples) {
        check_field(e.id, "id", e.id);
        check_field(e.frame_ref, "frame", e.id);
        check_field(e.audio_ref, "audio", e.id);
        check_field(e.label, "label", e.id);
        std::snprintf(buf, sizeof buf, "%.6f", e.timestamp);
        out << e.id << '\t' << e.frame_ref << '\t' << e.audio_ref << '\t' << e.label << '\t'
            << e.split << '\t' << buf << "\n";
    }
    write_text_file(path, out.str());
}

DatasetManifest load_manifest(const std::string& path) {
    std::istringstream in(read_text_file(path));
    DatasetManifest m;
    std::string line;
    int lineno = 0;

    if (!std::getline(in, line)) parse_fail(path, 1, "empty file");
    ++lineno;
    if (line != kMagicLine)
        parse_fail(path, lineno,
                   "expected header \"" + std::string(kMagicLine) + "\", got \"" + line + "\"");

    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::string body = line.substr(1);
            if (!body.empty() && body[0] == ' ') body.erase(0, 1);
            auto eq = body.find('=');
            if (eq == std::string::npos) parse_fail(path, lineno, "malformed header: " + line);
            const std::string key = body.substr(0, eq), value = body.substr(eq + 1);
            if (key == "source") {
                m.source = value;
            } else if (key == "seed") {
                m.seed = std::stoull(value);
            } else if (key == "train_ratio") {
                m.train_ratio = std::stod(value);
            } else if (key == "labels") {
                std::istringstream ls(value);
                std::string label;
                while (std::getline(ls, label, ','))
                    if (!label.empty()) m.labels.push_back(label);
            }  // unknown headers ignored
            continue;
        }

        std::vector<std::string> fields;
        std::size_t start = 0;
        for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1)
            fields.push_back(line.substr(start, tab - start));
        fields.push_back(line.substr(start));
        if (fields.size() != 6)
            parse_fail(path, lineno,
                       "expected 6 tab-separated fields, got " + std::to_string(fields.size()));

        Example e;
        e.id = fields[0];
        e.frame_ref = fields[1];
        e.audio_ref = fields[2];
        e.label = fields[3];
        e.split = fields[4];
        try {
            e.timestamp = std::stod(fields[5]);
        } catch (const std::exception&) {
            parse_fail(path, lineno, "bad timestamp \"" + fields[5] + "\"");
        }
        m.examples.push_back(std::move(e));
    }

    try {
        m.validate();
    } catch (const std::invalid_argument& err) {
        throw FormatError("manifest " + path + ": " + err.what());
    }
    return m;
}

std::string make_pseudo_text(const std::string& label, const std::string& tmpl) {
    if (label.empty()) throw std::invalid_argument("cannot build pseudo text for an empty label");
    const std::string placeholder = "[label]";
    auto pos = tmpl.find(placeholder);
    if (pos == std::string::npos)
        throw std::invalid_argument("pseudo text template \"" + tmpl +
                                    "\" does not contain [label]");
    std::string out = tmpl;
    do {
        out.replace(pos, placeholder.size(), label);
        pos = out.find(placeholder, pos + label.size());
    } while (pos != std::string::npos);
    return out;
}

void split(DatasetManifest& m, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0))
        throw std::invalid_argument("split ratio must lie in (0, 1), got " + std::to_string(ratio));
    const std::size_t n = m.examples.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);
    const std::size_t n_train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));
    for (std::size_t i = 0; i < n; ++i)
        m.examples[order[i]].split = i < n_train ? "train" : "test";
    m.train_ratio = ratio;
}

}  // namespace melbridge::data
