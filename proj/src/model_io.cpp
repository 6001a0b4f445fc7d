#include "sppnet/model_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "csv.hpp"
#include "sppnet/errors.hpp"

namespace sppnet::cascade {
namespace {

using detail::format_double;
using detail::parse_double;

std::vector<std::string> tokens(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  for (std::string t; ss >> t;) out.push_back(t);
  return out;
}

// Next non-comment line; comment lines carrying key=value go to `provenance`.
std::vector<std::string> next_record(std::istream& in, std::vector<std::pair<std::string, std::string>>* provenance) {
  std::string line;
  while (std::getline(in, line)) {
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      const auto body = detail::trim(t.substr(1));
      const auto eq = body.find('=');
      if (provenance && eq != std::string_view::npos) {
        provenance->emplace_back(std::string(detail::trim(body.substr(0, eq))),
                                 std::string(detail::trim(body.substr(eq + 1))));
      }
      continue;
    }
    return tokens(std::string(t));
  }
  throw DataError("model file ended early");
}

std::size_t parse_size(const std::string& s) {
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(s, &pos);
    if (pos != s.size()) throw DataError("bad integer '" + s + "' in model file");
    return static_cast<std::size_t>(v);
  } catch (const std::logic_error&) {
    throw DataError("bad integer '" + s + "' in model file");
  }
}

}  // namespace

void write_model(std::ostream& out, const ModelFile& model) {
  out << kModelMagic << '\n';
  for (const auto& [k, v] : model.provenance) out << "# " << k << '=' << v << '\n';
  out << "manifest";
  for (Block b : kAllBlocks) out << ' ' << block_name(b);
  out << '\n';
  const auto& lim = model.net.limits();
  out << "window " << lim.min_delta_tau << ' ' << lim.max_delta_tau << ' ' << lim.target_delta_tau << ' '
      << format_double(lim.min_sigma) << ' ' << lim.component << '\n';
  out << "region " << (model.region.calibrated() ? 1 : 0) << ' ' << format_double(model.region.theta_M()) << ' '
      << format_double(model.region.theta_m()) << '\n';
  if (model.normalization) {
    for (std::size_t c = 0; c < data::kColumns; ++c) {
      const auto& r = model.normalization->columns[c];
      out << "normalization " << data::kColumnNames[c] << ' ' << format_double(r.min) << ' ' << format_double(r.max)
          << '\n';
    }
  } else {
    out << "normalization none\n";
  }
  for (Block b : kAllBlocks) nn::write_layer(out, block_name(b), model.net.layer(b));
  out << "end\n";
}

ModelFile read_model(std::istream& in) {
  std::string line;
  do {
    if (!std::getline(in, line)) throw DataError("empty model file");
  } while (detail::trim(line).empty());
  if (detail::trim(line) != kModelMagic) throw DataError("not a cascade model file (bad header)");

  ModelFile m;
  auto rec = next_record(in, &m.provenance);
  if (rec.size() != kBlockCount + 1 || rec[0] != "manifest") throw DataError("model file: missing manifest");
  for (std::size_t i = 0; i < kBlockCount; ++i) {
    if (rec[i + 1] != block_name(kAllBlocks[i])) throw DataError("model file: unexpected manifest entry " + rec[i + 1]);
  }

  rec = next_record(in, &m.provenance);
  if ((rec.size() != 5 && rec.size() != 6) || rec[0] != "window") throw DataError("model file: bad window line");
  omega::WindowLimits lim;
  lim.min_delta_tau = parse_size(rec[1]);
  lim.max_delta_tau = parse_size(rec[2]);
  lim.target_delta_tau = parse_size(rec[3]);
  lim.min_sigma = parse_double(rec[4], 0);
  if (rec.size() == 6) lim.component = parse_size(rec[5]);

  rec = next_record(in, &m.provenance);
  if (rec.size() != 4 || rec[0] != "region") throw DataError("model file: bad region line");
  if (rec[1] == "1") {
    m.region = omega::AcceptanceRegion(parse_double(rec[2], 0), parse_double(rec[3], 0));
  } else if (rec[1] != "0") {
    throw DataError("model file: bad region flag");
  }

  rec = next_record(in, &m.provenance);
  if (rec.size() == 2 && rec[0] == "normalization" && rec[1] == "none") {
    m.normalization.reset();
  } else {
    data::NormalizationState state;
    for (std::size_t c = 0; c < data::kColumns; ++c) {
      if (c > 0) rec = next_record(in, &m.provenance);
      if (rec.size() != 4 || rec[0] != "normalization" || rec[1] != data::kColumnNames[c]) {
        throw DataError("model file: bad normalization line for " + std::string(data::kColumnNames[c]));
      }
      state.columns[c] = {parse_double(rec[2], 0), parse_double(rec[3], 0)};
    }
    m.normalization = state;
  }

  FrontBlock front;
  BackBlock back;
  front.params = nn::read_layer(in, "II");
  front.hidden = nn::read_layer(in, "IIIa");
  front.output = nn::read_layer(in, "IVa");
  back.hidden = nn::read_layer(in, "IIIb");
  back.output = nn::read_layer(in, "IVb");
  back.merge = nn::read_layer(in, "VI");
  try {
    m.net = CascadeNet(std::move(front), std::move(back), lim);
  } catch (const DomainError& e) {
    throw DataError(std::string("model file: ") + e.what());
  }
  rec = next_record(in, nullptr);
  if (rec.size() != 1 || rec[0] != "end") throw DataError("model file: missing end marker");
  return m;
}

void save_model(const ModelFile& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_model(out, model);
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_model(in);
}

}  // namespace sppnet::cascade
