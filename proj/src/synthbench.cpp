#include "lrselect/synthbench.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "lrselect/error.hpp"
#include "lrselect/numeric.hpp"
#include "lrselect/parallel.hpp"
#include "lrselect/random.hpp"

namespace lrselect {
namespace {

namespace fs = std::filesystem;

bool valid_name(const std::string& name) {
  if (name.empty()) return false;
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '_' || c == '-' || c == '.';
    if (!ok) return false;
  }
  return name != "." && name != "..";
}

std::string utterance_id(const std::string& domain, std::size_t index) {
  std::ostringstream os;
  os << domain << '-' << std::setw(5) << std::setfill('0') << index;
  return os.str();
}

}  // namespace

void validate_domain_specs(std::span<const DomainSpec> specs, std::size_t dim) {
  if (specs.empty()) throw Error(ErrorCode::InvalidSpec, "no domains specified");
  if (dim == 0) throw Error(ErrorCode::InvalidSpec, "feature dimension must be >= 1");
  std::set<std::string> names;
  for (const auto& spec : specs) {
    const std::string where = "domain '" + spec.name + "': ";
    if (!valid_name(spec.name))
      throw Error(ErrorCode::InvalidSpec, where + "name must be non-empty and use [A-Za-z0-9_.-]");
    if (!names.insert(spec.name).second)
      throw Error(ErrorCode::InvalidSpec, where + "duplicate domain name");
    if (spec.utterance_count < 1) throw Error(ErrorCode::InvalidSpec, where + "utterance_count must be >= 1");
    if (spec.min_frames < 1 || spec.max_frames < spec.min_frames)
      throw Error(ErrorCode::InvalidSpec, where + "frames_per_utterance must satisfy 1 <= min <= max");
    if (spec.mixture.empty()) throw Error(ErrorCode::InvalidSpec, where + "mixture is empty");
    double total = 0.0;
    for (const auto& comp : spec.mixture) {
      if (!(comp.weight > 0.0) || !std::isfinite(comp.weight))
        throw Error(ErrorCode::InvalidSpec, where + "mixture weights must be positive");
      total += comp.weight;
      if (comp.mean.size() != dim || comp.variance.size() != dim)
        throw Error(ErrorCode::InvalidSpec, where + "mean and variance must have " +
                                                std::to_string(dim) + " entries");
      for (double m : comp.mean)
        if (!std::isfinite(m)) throw Error(ErrorCode::InvalidSpec, where + "non-finite mean");
      for (double v : comp.variance)
        if (!(v > 0.0) || !std::isfinite(v))
          throw Error(ErrorCode::InvalidSpec, where + "variances must be positive and finite");
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw Error(ErrorCode::InvalidSpec, where + "mixture weights must sum to 1");
  }
}

std::vector<DomainSpec> domain_specs_from_json(const nlohmann::json& doc) {
  if (!doc.is_array()) throw Error(ErrorCode::InvalidSpec, "domain spec file must hold a JSON array");
  std::vector<DomainSpec> specs;
  try {
    for (const auto& item : doc) {
      DomainSpec spec;
      spec.name = item.at("name").get<std::string>();
      spec.utterance_count = item.at("utterance_count").get<std::size_t>();
      const auto& frames = item.at("frames_per_utterance");
      if (!frames.is_array() || frames.size() != 2)
        throw Error(ErrorCode::InvalidSpec, "frames_per_utterance must be [min, max]");
      spec.min_frames = frames[0].get<std::uint32_t>();
      spec.max_frames = frames[1].get<std::uint32_t>();
      spec.seed_offset = item.value("seed_offset", std::uint64_t{0});
      for (const auto& comp : item.at("mixture")) {
        spec.mixture.push_back({comp.at("weight").get<double>(),
                                comp.at("mean").get<std::vector<double>>(),
                                comp.at("variance").get<std::vector<double>>()});
      }
      specs.push_back(std::move(spec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidSpec, std::string("malformed domain spec: ") + e.what());
  }
  return specs;
}

nlohmann::ordered_json domain_specs_to_json(std::span<const DomainSpec> specs) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& spec : specs) {
    nlohmann::ordered_json item;
    item["name"] = spec.name;
    nlohmann::ordered_json mixture = nlohmann::ordered_json::array();
    for (const auto& comp : spec.mixture)
      mixture.push_back({{"weight", comp.weight}, {"mean", comp.mean}, {"variance", comp.variance}});
    item["mixture"] = std::move(mixture);
    item["utterance_count"] = spec.utterance_count;
    item["frames_per_utterance"] = {spec.min_frames, spec.max_frames};
    item["seed_offset"] = spec.seed_offset;
    doc.push_back(std::move(item));
  }
  return doc;
}

std::vector<DomainSpec> load_domain_specs(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "domain spec not found: " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::InvalidSpec, path.string() + ": " + e.what());
  }
  return domain_specs_from_json(doc);
}

std::vector<DomainSpec> separated_domain_specs(std::size_t count, std::size_t dim,
                                               std::size_t utterances_per_domain,
                                               std::uint32_t min_frames, std::uint32_t max_frames,
                                               double separation) {
  if (dim < count) throw Error(ErrorCode::InvalidSpec, "need dim >= number of domains");
  // Means a * e_i are pairwise a * sqrt(2) apart.
  const double offset = separation / std::sqrt(2.0);
  std::vector<DomainSpec> specs;
  for (std::size_t i = 0; i < count; ++i) {
    DomainSpec spec;
    spec.name = "d" + std::to_string(i);
    MixtureComponentSpec comp{1.0, std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
    comp.mean[i] = offset;
    spec.mixture.push_back(std::move(comp));
    spec.utterance_count = utterances_per_domain;
    spec.min_frames = min_frames;
    spec.max_frames = max_frames;
    specs.push_back(std::move(spec));
  }
  return specs;
}

FeatureMatrix sample_utterance(const DomainSpec& spec, std::size_t dim, std::uint64_t seed,
                               std::size_t domain_index, std::size_t utterance_index) {
  Rng rng(stream_seed(seed, domain_index, spec.seed_offset, utterance_index));
  const auto frames = static_cast<std::size_t>(rng.uniform_int(spec.min_frames, spec.max_frames));

  std::vector<double> stddev;
  for (const auto& comp : spec.mixture)
    for (double v : comp.variance) stddev.push_back(std::sqrt(v));

  FeatureMatrix m(frames, dim);
  for (std::size_t t = 0; t < frames; ++t) {
    const double u = rng.uniform();
    std::size_t c = 0;
    double acc = spec.mixture[0].weight;
    while (c + 1 < spec.mixture.size() && u >= acc) acc += spec.mixture[++c].weight;
    const auto& comp = spec.mixture[c];
    for (std::size_t d = 0; d < dim; ++d)
      m(t, d) = static_cast<float>(comp.mean[d] + stddev[c * dim + d] * rng.normal());
  }
  return m;
}

CorpusManifest generate_corpus(std::span<const DomainSpec> specs, std::size_t dim,
                               std::uint64_t seed, const fs::path& out_dir, unsigned threads) {
  validate_domain_specs(specs, dim);
  std::error_code ec;
  fs::create_directories(out_dir / "feats", ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + (out_dir / "feats").string() + ": " + ec.message());

  struct Job {
    std::size_t domain;
    std::size_t index;
  };
  std::vector<Job> jobs;
  for (std::size_t d = 0; d < specs.size(); ++d)
    for (std::size_t u = 0; u < specs[d].utterance_count; ++u) jobs.push_back({d, u});

  std::vector<UtteranceRecord> records(jobs.size());
  parallel_for(jobs.size(), threads, [&](std::size_t j) {
    const auto& spec = specs[jobs[j].domain];
    const auto matrix = sample_utterance(spec, dim, seed, jobs[j].domain, jobs[j].index);
    auto& rec = records[j];
    rec.id = utterance_id(spec.name, jobs[j].index);
    rec.domain = spec.name;
    rec.frame_count = static_cast<std::uint32_t>(matrix.rows());
    rec.dim = static_cast<std::uint32_t>(dim);
    rec.duration_sec = static_cast<double>(matrix.rows()) * kFrameShiftSec;
    rec.path = "feats/" + rec.id + ".lrsf";
    write_features(out_dir / rec.path, matrix);
  });

  auto manifest = CorpusManifest::create(std::move(records), out_dir);
  write_manifest(out_dir / "manifest.jsonl", manifest);
  return manifest;
}

SelectionReport evaluate_selection(const SelectionResult& result, const CorpusManifest& manifest,
                                   const std::string& target_domain) {
  SelectionReport report;
  report.target_domain = target_domain;
  bool target_present = false;
  for (const auto& rec : manifest.utterances()) {
    if (!rec.domain)
      throw Error(ErrorCode::MissingDomainLabels, "utterance '" + rec.id + "' has no domain label");
    report.per_domain_hours.emplace(*rec.domain, 0.0);
    if (*rec.domain == target_domain) {
      target_present = true;
      report.target_hours_total += rec.duration_sec / 3600.0;
    }
  }
  if (!target_present)
    throw Error(ErrorCode::MissingDomainLabels,
                "no utterance in the manifest carries the target domain '" + target_domain + "'");

  std::set<std::string> seen;
  for (const auto& item : result.selected) {
    const auto* rec = manifest.find(item.id);
    if (rec == nullptr) throw Error(ErrorCode::UnknownId, "selected id '" + item.id + "' is not in the manifest");
    if (!seen.insert(item.id).second)
      throw Error(ErrorCode::DuplicateId, "id '" + item.id + "' is selected twice");
  }
  report.selected_count = seen.size();
  // Manifest order, so a full selection sums exactly like the totals above.
  for (const auto& rec : manifest.utterances())
    if (seen.contains(rec.id)) report.per_domain_hours[*rec.domain] += rec.duration_sec / 3600.0;

  for (const auto& [domain, hours] : report.per_domain_hours) report.total_hours += hours;
  report.target_hours_selected = report.per_domain_hours[target_domain];
  for (const auto& [domain, hours] : report.per_domain_hours)
    report.per_domain_fraction[domain] = report.total_hours > 0.0 ? hours / report.total_hours : 0.0;
  if (report.total_hours > 0.0) report.precision = report.target_hours_selected / report.total_hours;
  report.recall = report.target_hours_selected / report.target_hours_total;
  return report;
}

nlohmann::ordered_json report_to_json(const SelectionReport& report) {
  nlohmann::ordered_json doc;
  doc["target_domain"] = report.target_domain;
  doc["selected_count"] = report.selected_count;
  doc["total_hours"] = report.total_hours;
  doc["target_hours_selected"] = report.target_hours_selected;
  doc["target_hours_total"] = report.target_hours_total;
  doc["precision"] = report.precision ? nlohmann::ordered_json(*report.precision) : nlohmann::ordered_json(nullptr);
  doc["recall"] = report.recall;
  nlohmann::ordered_json domains = nlohmann::ordered_json::array();
  for (const auto& [domain, hours] : report.per_domain_hours)
    domains.push_back({{"domain", domain}, {"hours", hours},
                       {"fraction", report.per_domain_fraction.at(domain)}});
  doc["per_domain"] = std::move(domains);
  return doc;
}

std::string report_table(const SelectionReport& report) {
  std::size_t width = 6;
  for (const auto& [domain, hours] : report.per_domain_hours) width = std::max(width, domain.size());

  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << "domain" << "  " << std::right
     << std::setw(10) << "hours" << "  " << std::setw(8) << "percent" << '\n';
  os << std::string(width + 22, '-') << '\n';
  os << std::fixed;
  for (const auto& [domain, hours] : report.per_domain_hours) {
    os << std::left << std::setw(static_cast<int>(width)) << domain << "  " << std::right
       << std::setw(10) << std::setprecision(4) << hours << "  " << std::setw(7)
       << std::setprecision(2) << 100.0 * report.per_domain_fraction.at(domain) << "%"
       << (domain == report.target_domain ? "  *" : "") << '\n';
  }
  os << std::string(width + 22, '-') << '\n';
  os << std::left << std::setw(static_cast<int>(width)) << "total" << "  " << std::right
     << std::setw(10) << std::setprecision(4) << report.total_hours << '\n';
  os << "target " << report.target_domain << ": precision ";
  if (report.precision)
    os << std::setprecision(4) << *report.precision;
  else
    os << "n/a";
  os << ", recall " << std::setprecision(4) << report.recall << '\n';
  return os.str();
}

double brute_force_optimum(std::span<const LrScore> scores, std::size_t cardinality) {
  if (scores.size() > 20)
    throw Error(ErrorCode::TooLarge, "brute force is limited to 20 scores, got " + std::to_string(scores.size()));
  const std::size_t n = scores.size();
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = linear_ratio(scores[i].mean_log_lr);

  double best = 0.0;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) > cardinality) continue;
    CompensatedSum sum;
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (1u << i)) sum.add(values[i]);
    best = std::max(best, sum.value());
  }
  return best;
}

}  // namespace lrselect
