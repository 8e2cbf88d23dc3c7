#pragma once

// JSON and CSV forms of games, sample batches, fits and reports.
//
// Doubles are written in their shortest round-trip decimal form (nlohmann's
// dtoa for JSON, std::to_chars for CSV), so write -> read is exact.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "gamerecover/diagnostics.hpp"
#include "gamerecover/equilibrium_sampler.hpp"
#include "gamerecover/error.hpp"
#include "gamerecover/game_generator.hpp"
#include "gamerecover/game_model.hpp"
#include "gamerecover/group_lasso.hpp"
#include "gamerecover/recovery.hpp"

namespace gamerecover {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------- primitives

inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw IoError("cannot format number");
  return {buf, end};
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw IoError("not a number: '" + s + "'");
  return v;
}

inline long parse_integer(const std::string& s) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw IoError("not an integer: '" + s + "'");
  return v;
}

inline Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Accepts nested rows or a flat row-major array of length rows*cols.
inline Matrix matrix_from_json(const Json& j, int rows, int cols) {
  Matrix m(rows, cols);
  if (!j.is_array()) throw IoError("matrix must be an array");
  if (j.size() == static_cast<std::size_t>(rows) && (rows == 0 || j.at(0).is_array())) {
    for (int r = 0; r < rows; ++r) {
      const Json& row = j.at(static_cast<std::size_t>(r));
      if (!row.is_array() || row.size() != static_cast<std::size_t>(cols)) throw IoError("matrix row has wrong length");
      for (int c = 0; c < cols; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
  } else if (j.size() == static_cast<std::size_t>(rows) * cols) {
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) m(r, c) = j.at(static_cast<std::size_t>(r) * cols + c).get<double>();
  } else {
    throw IoError("matrix has wrong shape");
  }
  return m;
}

inline Json optional_to_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

inline Json read_json(const std::filesystem::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const Json::exception& e) {
    throw IoError("malformed JSON in '" + path.string() + "': " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------- game

inline Json to_json(const GraphicalGame& game) {
  Json blocks = Json::array();
  for (const auto& [e, w] : game.blocks())
    blocks.push_back(Json{{"i", e.first}, {"j", e.second}, {"matrix", matrix_to_json(w)}});
  return Json{{"n", game.n()}, {"k", game.k()}, {"budget", game.budget()}, {"blocks", std::move(blocks)}};
}

inline GraphicalGame game_from_json(const Json& j) {
  try {
    GraphicalGame game(j.at("n").get<int>(), j.at("k").get<int>(), j.at("budget").get<double>());
    for (const auto& b : j.at("blocks")) {
      const int i = b.at("i").get<int>();
      const int jj = b.at("j").get<int>();
      detail::require(!game.has_block(i, jj), "game: duplicate block");
      const Matrix w = matrix_from_json(b.at("matrix"), game.k(), game.k());
      detail::require(!(w.array() == 0.0).all(), "game: stored blocks must be nonzero");
      game.set_block(i, jj, w);
    }
    return game;
  } catch (const Json::exception& e) {
    throw IoError(std::string("malformed game document: ") + e.what());
  }
}

// --------------------------------------------------------------------- batch

inline Json batch_metadata(const SampleBatch& batch) {
  Json noise = nullptr;
  if (batch.noise) noise = Json{{"family", to_string(batch.noise->family)}, {"sigma", batch.noise->sigma}};
  return Json{{"kind", to_string(batch.kind)}, {"noise", noise},     {"seed", batch.seed},
              {"n", batch.n},                  {"k", batch.k},       {"T", batch.samples()}};
}

inline std::string batch_to_csv(const SampleBatch& batch) {
  std::string out = "sample,player,coord,value\n";
  out.reserve(out.size() + static_cast<std::size_t>(batch.data.size()) * 32);
  for (Eigen::Index t = 0; t < batch.data.rows(); ++t)
    for (int i = 0; i < batch.n; ++i)
      for (int c = 0; c < batch.k; ++c) {
        out += std::to_string(t);
        out += ',';
        out += std::to_string(i);
        out += ',';
        out += std::to_string(c);
        out += ',';
        out += format_double(batch.data(t, static_cast<Eigen::Index>(i) * batch.k + c));
        out += '\n';
      }
  return out;
}

/// Sidecar path: same stem, .json extension.
inline std::filesystem::path sidecar_path(const std::filesystem::path& csv) {
  auto p = csv;
  p.replace_extension(".json");
  return p;
}

inline void write_batch(const std::filesystem::path& csv, const SampleBatch& batch) {
  write_text(csv, batch_to_csv(batch));
  write_json(sidecar_path(csv), batch_metadata(batch));
}

inline SampleBatch read_batch(const std::filesystem::path& csv) {
  const Json meta = read_json(sidecar_path(csv));
  SampleBatch batch;
  try {
    batch.n = meta.at("n").get<int>();
    batch.k = meta.at("k").get<int>();
    batch.seed = meta.at("seed").get<std::uint64_t>();
    const std::string kind = meta.at("kind").get<std::string>();
    if (kind != "exact" && kind != "perturbed") throw IoError("batch kind must be exact or perturbed");
    batch.kind = kind == "exact" ? BatchKind::exact : BatchKind::perturbed;
    if (!meta.at("noise").is_null())
      batch.noise = NoiseSpec{parse_noise_family(meta.at("noise").at("family").get<std::string>()),
                              meta.at("noise").at("sigma").get<double>()};
    const long t = meta.at("T").get<long>();
    if (t < 1 || batch.n < 1 || batch.k < 1) throw IoError("batch sidecar has invalid sizes");
    batch.data = Matrix::Constant(t, static_cast<Eigen::Index>(batch.n) * batch.k,
                                  std::numeric_limits<double>::quiet_NaN());
  } catch (const Json::exception& e) {
    throw IoError(std::string("malformed batch sidecar: ") + e.what());
  }

  std::istringstream in(read_text(csv));
  std::string line;
  if (!std::getline(in, line) || line != "sample,player,coord,value")
    throw IoError("batch CSV must start with header 'sample,player,coord,value'");
  long filled = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 4) throw IoError("batch CSV row must have 4 fields: '" + line + "'");
    const long t = parse_integer(cells[0]);
    const long i = parse_integer(cells[1]);
    const long c = parse_integer(cells[2]);
    if (t < 0 || t >= batch.data.rows() || i < 0 || i >= batch.n || c < 0 || c >= batch.k)
      throw IoError("batch CSV index out of range: '" + line + "'");
    batch.data(t, static_cast<Eigen::Index>(i) * batch.k + c) = parse_double(cells[3]);
    ++filled;
  }
  if (filled != batch.data.size() || !batch.data.allFinite())
    throw IoError("batch CSV does not cover every (sample, player, coord) exactly once");
  return batch;
}

// ---------------------------------------------------------------------- fits

inline Json to_json(const FitResult& f) {
  Json blocks = Json::array();
  for (int j : f.active_blocks) blocks.push_back(Json{{"j", j}, {"matrix", matrix_to_json(f.block(j))}});
  return Json{{"player", f.player},
              {"lambda", f.lambda},
              {"objective", f.objective},
              {"kkt_residual", f.kkt_residual},
              {"iterations", f.iterations},
              {"converged", f.converged},
              {"stop_reason", to_string(f.stop_reason)},
              {"blocks", std::move(blocks)}};
}

inline Json fits_to_json(int n, int k, const std::map<int, PlayerFit>& fits) {
  Json arr = Json::array();
  for (const auto& [i, pf] : fits) {
    if (pf.fit) {
      arr.push_back(to_json(*pf.fit));
    } else {
      arr.push_back(Json{{"player", i}, {"error", pf.error}});
    }
  }
  return Json{{"n", n}, {"k", k}, {"fits", std::move(arr)}};
}

inline std::map<int, PlayerFit> fits_from_json(const Json& j) {
  std::map<int, PlayerFit> out;
  try {
    const int n = j.at("n").get<int>();
    const int k = j.at("k").get<int>();
    for (const auto& e : j.at("fits")) {
      PlayerFit pf;
      const int i = e.at("player").get<int>();
      detail::require(i >= 0 && i < n, "fits: player out of range");
      if (e.contains("error")) {
        pf.error = e.at("error").get<std::string>();
        out.emplace(i, std::move(pf));
        continue;
      }
      FitResult f;
      f.player = i;
      f.n = n;
      f.k = k;
      f.lambda = e.at("lambda").get<double>();
      f.objective = e.at("objective").get<double>();
      f.kkt_residual = e.at("kkt_residual").get<double>();
      f.iterations = e.at("iterations").get<int>();
      f.converged = e.at("converged").get<bool>();
      const std::string reason = e.value("stop_reason", std::string("kkt"));
      f.stop_reason = reason == "kkt" ? StopReason::kkt : reason == "stalled" ? StopReason::stalled : StopReason::max_iter;
      f.w_hat = RowBlockMatrix::uniform_zero(n - 1, k, k);
      for (const auto& b : e.at("blocks")) {
        const int jj = b.at("j").get<int>();
        detail::require(jj != i && jj >= 0 && jj < n, "fits: block index out of range");
        f.w_hat.block(position_without(i, jj)) = matrix_from_json(b.at("matrix"), k, k).transpose();
      }
      for (int jj : other_players(n, i))
        if (f.w_hat.block(position_without(i, jj)).norm() > 0.0) f.active_blocks.push_back(jj);
      pf.fit = std::move(f);
      out.emplace(i, std::move(pf));
    }
  } catch (const Json::exception& e) {
    throw IoError(std::string("malformed fits document: ") + e.what());
  }
  return out;
}

// ------------------------------------------------------------------- reports

inline Json edges_to_json(const EdgeSet& edges) {
  Json arr = Json::array();
  for (const auto& [i, j] : edges) arr.push_back(Json::array({i, j}));
  return arr;
}

inline Json to_json(const AssumptionReport& a) {
  Json c = Json::array();
  for (const auto& v : a.c_min_per_player) c.push_back(optional_to_json(v));
  return Json{{"alpha", a.alpha},
              {"c_min", a.c_min},
              {"w_max", a.w_max},
              {"w_min", a.w_min},
              {"budget_ok", a.budget_ok},
              {"zero_utility_ok", a.zero_utility_ok},
              {"c_min_clipped", a.c_min_clipped},
              {"singular", a.singular},
              {"alpha_per_player", a.alpha_per_player},
              {"c_min_per_player", std::move(c)}};
}

inline Json to_json(const DiagnosticsReport& d) {
  Json players = Json::object();
  for (const auto& p : d.players) {
    Json e{{"c_min_empirical", optional_to_json(p.c_min_empirical)},
           {"alpha_empirical", p.alpha_empirical},
           {"m_norm", p.m_norm},
           {"singular", p.singular},
           {"condition", optional_to_json(p.condition)}};
    if (p.noise)
      e["noise_moments"] = Json{{"xe_support_w", p.noise->xe_support_w},
                                {"xe_own_support", p.noise->xe_own_support},
                                {"xe_nonsupport_w", p.noise->xe_nonsupport_w},
                                {"xe_own_nonsupport", p.noise->xe_own_nonsupport}};
    players[std::to_string(p.player)] = std::move(e);
  }
  return Json{{"sigma", d.sigma}, {"T", d.samples}, {"players", std::move(players)}};
}

inline Json to_json(const RecoveryReport& r) {
  Json eps = Json::array();
  for (const auto& v : r.epsilon_per_player) eps.push_back(optional_to_json(v));
  return Json{{"edges_true", edges_to_json(r.edges_true)},
              {"edges_est", edges_to_json(r.edges_est)},
              {"precision", r.precision},
              {"recall", r.recall},
              {"f1", r.f1},
              {"exact_structure", r.exact_structure},
              {"param_error_binf", r.param_error_binf},
              {"param_error_per_player", r.param_error_per_player},
              {"delta", optional_to_json(r.delta)},
              {"epsilon", optional_to_json(r.epsilon)},
              {"epsilon_per_player", std::move(eps)},
              {"chain_epsilon", r.chain_epsilon},
              {"containment_rate", r.containment.rate},
              {"containment_points", r.containment.points},
              {"containment_zero_only", r.containment.zero_equilibrium_only},
              {"containment_max_violation", r.containment.max_violation},
              {"chain_slack", r.containment.chain_slack},
              {"unconverged", r.unconverged},
              {"kkt_residual_max", r.kkt_residual_max}};
}

}  // namespace gamerecover
