#include <sstream>

#include <json.hpp>

#include "flap/binary_io.hpp"
#include "flap/condition.hpp"
#include "flap/error.hpp"

namespace flap {

namespace {

constexpr std::string_view kMagic = "FLAPCOND";
constexpr int kVersion = 1;

struct NamedSlice {
  const char* name;
  Slice slice;
};
constexpr std::array<NamedSlice, 5> kLayout{{{"theta_globalR", cond_slice::kGlobal},
                                             {"theta_eyes", cond_slice::kEyes},
                                             {"theta_jaw", cond_slice::kJaw},
                                             {"psi_eyelids", cond_slice::kEyelids},
                                             {"psi_exp", cond_slice::kExpr}}};

}  // namespace

std::string serialize_text(const ConditionSequence& seq) {
  seq.validate();
  std::ostringstream o;
  o << "{\n  \"version\": " << kVersion << ",\n  \"fps\": " << io::format_double(seq.fps) << ",\n  \"layout\": {";
  for (std::size_t i = 0; i < kLayout.size(); ++i) {
    o << (i ? ", " : "") << '"' << kLayout[i].name << "\": [" << kLayout[i].slice.begin << ", "
      << kLayout[i].slice.end << "]";
  }
  o << "},\n  \"frames\": [\n";
  for (std::size_t t = 0; t < seq.size(); ++t) {
    o << "    [";
    for (std::size_t k = 0; k < kCondDim; ++k) o << (k ? ", " : "") << io::format_double(seq.frames[t][k]);
    o << (t + 1 < seq.size() ? "],\n" : "]\n");
  }
  o << "  ]\n}\n";
  return o.str();
}

ConditionSequence deserialize_text(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("condition file: ") + e.what());
  }
  try {
    if (j.at("version").get<int>() != kVersion) throw FormatError("condition file: unsupported version");
    const auto& layout = j.at("layout");
    if (layout.size() != kLayout.size()) throw FormatError("condition file: unexpected layout");
    for (const auto& s : kLayout) {
      const auto r = layout.at(s.name).get<std::array<std::size_t, 2>>();
      if (r[0] != s.slice.begin || r[1] != s.slice.end) {
        throw FormatError(std::string("condition file: slice ") + s.name + " has unexpected offsets");
      }
    }
    ConditionSequence seq;
    seq.fps = j.at("fps").get<double>();
    for (const auto& f : j.at("frames")) {
      if (!f.is_array() || f.size() != kCondDim) throw FormatError("condition file: frame is not 120 numbers");
      HeadCondition c;
      for (std::size_t k = 0; k < kCondDim; ++k) c[k] = f[k].get<double>();
      seq.frames.push_back(c);
    }
    seq.validate();
    return seq;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("condition file: ") + e.what());
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(std::string("condition file: ") + e.what());
  }
}

std::string serialize_binary(const ConditionSequence& seq) {
  seq.validate();
  std::ostringstream o(std::ios::binary);
  io::BinaryWriter w(o);
  w.magic(kMagic);
  w.u64(kVersion);
  w.f64(seq.fps);
  w.u64(seq.size());
  w.u64(kCondDim);
  for (const auto& f : seq.frames) w.f64s(f);
  return o.str();
}

ConditionSequence deserialize_binary(std::string_view bytes) {
  std::istringstream in(std::string(bytes), std::ios::binary);
  io::BinaryReader r(in, "condition file");
  r.expect_magic(kMagic);
  if (r.u64() != kVersion) throw FormatError("condition file: unsupported version");
  ConditionSequence seq;
  seq.fps = r.f64();
  const auto n = r.u64();
  if (r.u64() != kCondDim) throw FormatError("condition file: frame width is not 120");
  if (n > (std::uint64_t{1} << 28)) throw FormatError("condition file: implausible frame count");
  seq.frames.resize(n);
  for (auto& f : seq.frames) {
    const auto v = r.f64s(kCondDim);
    std::copy(v.begin(), v.end(), f.begin());
  }
  r.expect_end();
  try {
    seq.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("condition file: ") + e.what());
  }
  return seq;
}

void save_conditions(const ConditionSequence& seq, const std::string& path) {
  const bool binary = path.size() >= 4 && path.compare(path.size() - 4, 4, ".bin") == 0;
  io::write_file_bytes(path, binary ? serialize_binary(seq) : serialize_text(seq));
}

ConditionSequence load_conditions(const std::string& path) {
  const auto bytes = io::read_file_bytes(path);
  const std::string_view view(bytes.data(), bytes.size());
  if (view.substr(0, kMagic.size()) == kMagic) return deserialize_binary(view);
  return deserialize_text(view);
}

}  // namespace flap
