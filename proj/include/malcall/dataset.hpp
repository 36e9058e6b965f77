#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <functional>
#include <memory>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "malcall/error.hpp"
#include "malcall/features.hpp"
#include "malcall/rng.hpp"

namespace malcall {

// Row-major design matrix with aligned labels and caller group keys.
struct Dataset {
  std::shared_ptr<const Schema> schema;
  std::size_t cols = 0;
  std::vector<double> x;
  std::vector<std::uint8_t> y;
  std::vector<PhoneId> group;

  std::size_t rows() const noexcept { return y.size(); }
  std::span<const double> row(std::size_t i) const { return {x.data() + i * cols, cols}; }

  std::size_t positives() const { return static_cast<std::size_t>(std::count(y.begin(), y.end(), 1)); }

  void add(std::span<const double> v, bool label, const PhoneId& g) {
    x.insert(x.end(), v.begin(), v.end());
    y.push_back(label ? 1 : 0);
    group.push_back(g);
  }
};

inline Dataset empty_dataset(std::shared_ptr<const Schema> schema) {
  Dataset d;
  d.cols = schema->width();
  d.schema = std::move(schema);
  return d;
}

struct Sampling {
  enum class Mode { balanced, all_benign };
  Mode mode = Mode::balanced;
  std::uint64_t seed = 0;

  static Sampling balanced(std::uint64_t seed) { return {Mode::balanced, seed}; }
  static Sampling all_benign() { return {Mode::all_benign, 0}; }

  std::string name() const { return mode == Mode::balanced ? "balanced" : "all_benign"; }
};

using ExampleFilter = std::function<bool(const Example&)>;

// Numbers kept by `sampling` among examples passing `filter`.
inline std::set<PhoneId> sample_numbers(std::span<const Example> examples, const Sampling& sampling,
                                        const ExampleFilter& filter = {}) {
  std::set<PhoneId> malicious, benign;
  for (const auto& e : examples) {
    if (filter && !filter(e)) continue;
    (e.malicious ? malicious : benign).insert(e.caller);
  }
  std::set<PhoneId> keep(malicious.begin(), malicious.end());
  if (sampling.mode == Sampling::Mode::all_benign) {
    keep.insert(benign.begin(), benign.end());
    return keep;
  }
  if (malicious.empty()) throw ContractError("balanced sampling needs at least one malicious number");
  std::vector<PhoneId> pool(benign.begin(), benign.end());  // sorted, so the shuffle is reproducible
  Rng rng(derive_seed(sampling.seed, 0x5a4d));
  rng.shuffle(pool);
  const std::size_t k = std::min(pool.size(), malicious.size());
  keep.insert(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
  return keep;
}

// One row per qualifying example of every retained number. Balanced mode keeps
// as many benign numbers as there are malicious ones, with all their records.
inline Dataset build_dataset(std::span<const Example> examples, const FeatureSelector& selector,
                             const Sampling& sampling, const ExampleFilter& filter = {}) {
  const auto keep = sample_numbers(examples, sampling, filter);
  Dataset d = empty_dataset(std::make_shared<const Schema>(selector));
  std::vector<double> buf(d.cols);
  for (const auto& e : examples) {
    if (filter && !filter(e)) continue;
    if (!keep.contains(e.caller)) continue;
    encode_into(e.raw, *d.schema, buf);
    d.add(buf, e.malicious, e.caller);
  }
  return d;
}

inline Dataset build_dataset(const CallLog& log, const LabelTable& labels, const FeatureSelector& selector,
                             const Sampling& sampling, const FeatureOptions& opt = {}) {
  const auto examples = extract_all(log, labels, opt);
  return build_dataset(examples, selector, sampling);
}

inline void write_csv(std::ostream& out, const Dataset& d) {
  for (std::size_t c = 0; c < d.cols; ++c) out << d.schema->column_name(c) << ',';
  out << "label,caller\n";
  char buf[32];
  for (std::size_t i = 0; i < d.rows(); ++i) {
    const auto r = d.row(i);
    for (double v : r) {
      auto res = std::to_chars(buf, buf + sizeof buf, v);
      out.write(buf, res.ptr - buf);
      out << ',';
    }
    out << static_cast<int>(d.y[i]) << ',' << d.group[i].hex() << '\n';
  }
}

inline nlohmann::json dataset_manifest(const Dataset& d, const Sampling& sampling) {
  std::set<PhoneId> mal, ben;
  for (std::size_t i = 0; i < d.rows(); ++i) (d.y[i] ? mal : ben).insert(d.group[i]);
  nlohmann::json columns = nlohmann::json::array();
  for (const auto& e : d.schema->entries())
    columns.push_back({{"name", e.name}, {"encoding", to_string(e.encoding)}, {"width", e.width}});
  return {{"selector", d.schema->selector_name()},
          {"sampling", sampling.name()},
          {"sampling_seed", sampling.seed},
          {"rows", d.rows()},
          {"positive_rows", d.positives()},
          {"malicious_numbers", mal.size()},
          {"benign_numbers", ben.size()},
          {"width", d.cols},
          {"schema_fingerprint", d.schema->fingerprint()},
          {"schema", columns}};
}

}  // namespace malcall
