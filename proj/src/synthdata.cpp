#include "tetra/synthdata.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "tetra/error.hpp"

namespace tetra {

UniverseConfig default_universe_config() {
  UniverseConfig c;
  c.tools = {
      {"tool_a", {AlphaLaw::Kind::Fixed, 0.5, 0.35, 0.65}, 0.02, 0.30},
      {"tool_b", {AlphaLaw::Kind::Uniform, 0.5, 0.35, 0.65}, 0.02, 0.27},
      {"tool_c", {AlphaLaw::Kind::Fixed, 0.5, 0.35, 0.65}, 0.05, 0.26},
      {"tool_d", {AlphaLaw::Kind::Uniform, 0.5, 0.35, 0.65}, 0.05, 0.22},
  };
  return c;
}

const char* to_string(Partition p) { return p == Partition::Train ? "train" : "test"; }

Embedding morph_embedding(const Embedding& e1, const Embedding& e2, double alpha,
                          double noise_std, Rng& rng) {
  require(e1.size() == e2.size(), ErrorCode::DimensionMismatch,
          "morph inputs have different lengths");
  require(alpha > 0.0 && alpha < 1.0, ErrorCode::OutOfRangeInput,
          "morph blend factor must lie in (0, 1)");
  require(noise_std >= 0.0, ErrorCode::OutOfRangeInput, "morph noise std must be >= 0");
  Embedding out(e1.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = alpha * e1[i] + (1.0 - alpha) * e2[i];
    if (noise_std > 0.0) out[i] += rng.gaussian(0.0, noise_std);
  }
  return normalize(out);
}

namespace {

void validate_config(const UniverseConfig& c) {
  require(c.dim >= 1, ErrorCode::ConfigInvalid, "universe dim must be >= 1");
  require(c.ref_noise >= 0.0 && c.probe_noise >= 0.0, ErrorCode::ConfigInvalid,
          "noise stds must be >= 0");
  require(c.train_subjects == 0 || c.train_subjects >= 3, ErrorCode::ConfigInvalid,
          "a non-empty partition needs at least 3 subjects (quadruplets need a third subject)");
  require(c.test_subjects == 0 || c.test_subjects >= 3, ErrorCode::ConfigInvalid,
          "a non-empty partition needs at least 3 subjects (quadruplets need a third subject)");
  require(c.train_subjects + c.test_subjects >= 3, ErrorCode::ConfigInvalid,
          "universe needs at least 3 subjects");
  require(c.refs_per_subject >= 1, ErrorCode::ConfigInvalid,
          "each subject needs at least one reference");
  std::unordered_set<std::string> names;
  for (const ToolConfig& t : c.tools) {
    require(!t.name.empty(), ErrorCode::ConfigInvalid, "tool name must not be empty");
    require(names.insert(t.name).second, ErrorCode::ConfigInvalid,
            "duplicate tool name '" + t.name + "'");
    require(t.noise_std >= 0.0, ErrorCode::ConfigInvalid, "tool noise std must be >= 0");
    if (t.alpha.kind == AlphaLaw::Kind::Fixed) {
      require(t.alpha.value > 0.0 && t.alpha.value < 1.0, ErrorCode::ConfigInvalid,
              "tool alpha must lie in (0, 1)");
    } else {
      require(t.alpha.lo > 0.0 && t.alpha.hi < 1.0 && t.alpha.lo <= t.alpha.hi,
              ErrorCode::ConfigInvalid, "tool alpha range must lie inside (0, 1)");
    }
    require(t.artifact_strength >= 0.0, ErrorCode::ConfigInvalid,
            "tool artifact strength must be >= 0");
    if (t.artifact_strength > 0.0) {
      require(c.artifact_dim >= 1, ErrorCode::ConfigInvalid,
              "artifact_dim must be >= 1 when artifacts are used");
    }
  }
  const std::size_t subject_dim = c.subject_dim == 0 ? c.dim : c.subject_dim;
  require(subject_dim >= 1 && subject_dim + c.artifact_dim <= c.dim, ErrorCode::ConfigInvalid,
          "subject_dim + artifact_dim must not exceed dim");
  require(c.artifact_overlap >= 0.0 && c.artifact_overlap < 1.0, ErrorCode::ConfigInvalid,
          "artifact_overlap must lie in [0, 1)");
  require(c.artifact_noise >= 0.0, ErrorCode::ConfigInvalid, "artifact_noise must be >= 0");
  if (c.morphs_per_tool > 0 && !c.tools.empty()) {
    require(c.train_subjects >= 2 || c.test_subjects >= 2, ErrorCode::ConfigInvalid,
            "morphs need at least two subjects in a partition");
  }
}

std::string subject_name(std::size_t k) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "s%05zu", k);
  return buf;
}

Embedding perturbed_direction(const Embedding& dir, double std, Rng& rng,
                              const std::vector<Embedding>& artifact_basis,
                              double artifact_noise) {
  Embedding v(dir.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = dir[i] + (std > 0.0 ? rng.gaussian(0.0, std) : 0.0);
  }
  if (artifact_noise > 0.0) {
    for (const Embedding& b : artifact_basis) {
      const double g = rng.gaussian(0.0, artifact_noise);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] += g * b[i];
    }
  }
  return normalize(v);
}

}  // namespace

SyntheticUniverse generate_universe(const UniverseConfig& config) {
  validate_config(config);
  SyntheticUniverse u;
  u.config = config;
  u.set.dim = config.dim;

  // latent bases: a seeded orthonormal frame provides subject_dim axes for
  // subject directions and artifact_dim further axes for the shared artifact
  // subspace, so artifacts are off the subject manifold
  const std::size_t subject_dim = config.subject_dim == 0 ? config.dim : config.subject_dim;
  std::vector<Embedding> subject_basis;
  {
    Rng basis_rng(mix_seed(config.seed, 0x62617369ull));
    const auto draw_orthonormal = [&](std::vector<Embedding>& dst, std::size_t count,
                                      const std::vector<const std::vector<Embedding>*>& against) {
      for (std::size_t k = 0; k < count; ++k) {
        Embedding v(config.dim);
        for (double& x : v) x = basis_rng.gaussian();
        for (const auto* prev : against) {
          for (const Embedding& b : *prev) {
            double dot = 0.0;
            for (std::size_t j = 0; j < v.size(); ++j) dot += v[j] * b[j];
            for (std::size_t j = 0; j < v.size(); ++j) v[j] -= dot * b[j];
          }
        }
        for (const Embedding& b : dst) {
          double dot = 0.0;
          for (std::size_t j = 0; j < v.size(); ++j) dot += v[j] * b[j];
          for (std::size_t j = 0; j < v.size(); ++j) v[j] -= dot * b[j];
        }
        dst.push_back(normalize(v));
      }
    };
    draw_orthonormal(subject_basis, subject_dim, {});
    if (config.artifact_dim > 0) {
      // off-manifold frame, then blended with in-manifold directions so that
      // a share of the artifact energy lies inside the subject subspace
      std::vector<Embedding> off_basis;
      draw_orthonormal(off_basis, config.artifact_dim, {&subject_basis});
      const double w_in = std::sqrt(config.artifact_overlap);
      const double w_off = std::sqrt(1.0 - config.artifact_overlap);
      for (std::size_t k = 0; k < config.artifact_dim; ++k) {
        Embedding v(config.dim, 0.0);
        Embedding in_dir(config.dim, 0.0);
        for (const Embedding& b : subject_basis) {
          const double g = basis_rng.gaussian();
          for (std::size_t j = 0; j < config.dim; ++j) in_dir[j] += g * b[j];
        }
        in_dir = normalize(in_dir);
        for (std::size_t j = 0; j < config.dim; ++j) {
          v[j] = w_off * off_basis[k][j] + w_in * in_dir[j];
        }
        u.artifact_basis.push_back(normalize(v));
      }
    }
  }

  const std::size_t total = config.train_subjects + config.test_subjects;
  std::vector<std::vector<std::size_t>> partition_subjects(2);
  for (std::size_t k = 0; k < total; ++k) {
    const std::string name = subject_name(k);
    const Partition part = k < config.train_subjects ? Partition::Train : Partition::Test;
    Rng dir_rng(mix_seed(config.seed, 0x646972ull, k));
    Embedding dir(config.dim, 0.0);
    for (const Embedding& b : subject_basis) {
      const double g = dir_rng.gaussian();
      for (std::size_t j = 0; j < config.dim; ++j) dir[j] += g * b[j];
    }
    dir = normalize(dir);
    u.subjects.push_back(name);
    u.partition_of[name] = part;
    u.direction_of[name] = dir;
    partition_subjects[part == Partition::Train ? 0 : 1].push_back(k);

    Rng sample_rng(mix_seed(config.seed, 0x73616d70ull, k));
    for (std::size_t r = 0; r < config.refs_per_subject; ++r) {
      SampleRecord rec;
      rec.sample_id = name + "_ref" + std::to_string(r);
      rec.kind = SampleKind::Reference;
      rec.subject_a = name;
      rec.embedding = perturbed_direction(dir, config.ref_noise, sample_rng,
                                          u.artifact_basis, config.artifact_noise);
      u.set.records.push_back(std::move(rec));
    }
    for (std::size_t p = 0; p < config.probes_per_subject; ++p) {
      SampleRecord rec;
      rec.sample_id = name + "_probe" + std::to_string(p);
      rec.kind = SampleKind::Probe;
      rec.subject_a = name;
      rec.embedding = perturbed_direction(dir, config.probe_noise, sample_rng,
                                          u.artifact_basis, config.artifact_noise);
      u.set.records.push_back(std::move(rec));
    }
  }

  // references indexed by subject, needed for morph sources
  std::unordered_map<std::string, std::vector<const SampleRecord*>> refs;
  for (const SampleRecord& r : u.set.records) {
    if (r.kind == SampleKind::Reference) refs[r.subject_a].push_back(&r);
  }

  std::vector<SampleRecord> morph_records;
  for (std::size_t part = 0; part < 2; ++part) {
    const auto& pool = partition_subjects[part];
    if (pool.size() < 2) continue;
    for (std::size_t ti = 0; ti < config.tools.size(); ++ti) {
      const ToolConfig& tool = config.tools[ti];
      Rng rng(mix_seed(config.seed, mix_seed(0x6d6f7270ull, ti), part));
      for (std::size_t k = 0; k < config.morphs_per_tool; ++k) {
        const std::string s1 = subject_name(pool[rng.uniform_index(pool.size())]);
        std::string s2;
        do {
          s2 = subject_name(pool[rng.uniform_index(pool.size())]);
        } while (s2 == s1);
        const auto& refs1 = refs[s1];
        const auto& refs2 = refs[s2];
        const Embedding& e1 = refs1[rng.uniform_index(refs1.size())]->embedding;
        const Embedding& e2 = refs2[rng.uniform_index(refs2.size())]->embedding;
        const double alpha = tool.alpha.kind == AlphaLaw::Kind::Fixed
                                 ? tool.alpha.value
                                 : rng.uniform(tool.alpha.lo, tool.alpha.hi);
        SampleRecord rec;
        rec.sample_id = tool.name + (part == 0 ? "_trm" : "_tem") + std::to_string(k);
        rec.kind = SampleKind::Morph;
        rec.subject_a = s1;
        rec.subject_b = s2;
        rec.tool = tool.name;
        Embedding blend(config.dim);
        for (std::size_t j = 0; j < config.dim; ++j) {
          blend[j] = alpha * e1[j] + (1.0 - alpha) * e2[j];
          if (tool.noise_std > 0.0) blend[j] += rng.gaussian(0.0, tool.noise_std);
        }
        if (tool.artifact_strength > 0.0 && !u.artifact_basis.empty()) {
          // a random direction inside the artifact subspace, fixed norm
          Embedding coeff(u.artifact_basis.size());
          for (double& x : coeff) x = rng.gaussian();
          coeff = normalize(coeff);
          for (std::size_t k2 = 0; k2 < u.artifact_basis.size(); ++k2) {
            for (std::size_t j = 0; j < config.dim; ++j) {
              blend[j] += tool.artifact_strength * coeff[k2] * u.artifact_basis[k2][j];
            }
          }
        }
        rec.embedding = normalize(blend);
        morph_records.push_back(std::move(rec));
      }
    }
  }
  for (SampleRecord& r : morph_records) u.set.records.push_back(std::move(r));

  validate(u.set);
  return u;
}

ProtocolSplits split_protocol(const SyntheticUniverse& universe, const SplitProtocol& protocol) {
  std::unordered_set<std::string> known;
  for (const ToolConfig& t : universe.config.tools) known.insert(t.name);
  for (const auto* tools : {&protocol.train_tools, &protocol.val_tools, &protocol.test_tools}) {
    require(!tools->empty(), ErrorCode::ProtocolInfeasible, "a protocol tool list is empty");
    for (const std::string& t : *tools) {
      require(known.count(t) > 0, ErrorCode::ProtocolInfeasible,
              "protocol names unknown tool '" + t + "'");
    }
  }

  const auto part_of = [&](const std::string& subject) {
    const auto it = universe.partition_of.find(subject);
    require(it != universe.partition_of.end(), ErrorCode::ProtocolInfeasible,
            "sample references unknown subject '" + subject + "'");
    return it->second;
  };
  const auto in_list = [](const std::vector<std::string>& tools, const std::string& t) {
    return std::find(tools.begin(), tools.end(), t) != tools.end();
  };

  ProtocolSplits out;
  out.train.dim = out.val.dim = out.test.dim = universe.set.dim;
  for (const SampleRecord& r : universe.set.records) {
    if (r.kind == SampleKind::Morph) {
      const Partition p1 = part_of(r.subject_a);
      if (p1 != part_of(r.subject_b)) continue;  // never blended across partitions
      if (p1 == Partition::Train) {
        if (in_list(protocol.train_tools, r.tool)) out.train.records.push_back(r);
        if (in_list(protocol.val_tools, r.tool)) out.val.records.push_back(r);
      } else if (in_list(protocol.test_tools, r.tool)) {
        out.test.records.push_back(r);
      }
    } else if (part_of(r.subject_a) == Partition::Train) {
      out.train.records.push_back(r);
      out.val.records.push_back(r);
    } else {
      out.test.records.push_back(r);
    }
  }

  const auto check_cell = [](const EmbeddingSet& s, const std::string& name) {
    std::size_t refs = 0, probes = 0, morphs = 0;
    for (const SampleRecord& r : s.records) {
      refs += r.kind == SampleKind::Reference;
      probes += r.kind == SampleKind::Probe;
      morphs += r.kind == SampleKind::Morph;
    }
    require(refs > 0 && probes > 0 && morphs > 0, ErrorCode::ProtocolInfeasible,
            "the " + name + " split is missing references, probes or morphs");
  };
  check_cell(out.train, "train");
  check_cell(out.val, "validation");
  check_cell(out.test, "test");
  return out;
}

void save_ground_truth(const SyntheticUniverse& universe, const std::string& path) {
  nlohmann::json j;
  j["dim"] = universe.config.dim;
  j["seed"] = universe.config.seed;
  nlohmann::json tools = nlohmann::json::array();
  for (const ToolConfig& t : universe.config.tools) {
    nlohmann::json tj;
    tj["name"] = t.name;
    if (t.alpha.kind == AlphaLaw::Kind::Fixed) {
      tj["alpha"] = {{"kind", "fixed"}, {"value", t.alpha.value}};
    } else {
      tj["alpha"] = {{"kind", "uniform"}, {"lo", t.alpha.lo}, {"hi", t.alpha.hi}};
    }
    tj["noise_std"] = t.noise_std;
    tj["artifact_strength"] = t.artifact_strength;
    tools.push_back(tj);
  }
  j["tools"] = tools;
  j["artifact_basis"] = universe.artifact_basis;
  nlohmann::json subjects;
  for (const std::string& s : universe.subjects) {
    subjects[s] = {{"partition", to_string(universe.partition_of.at(s))},
                   {"direction", universe.direction_of.at(s)}};
  }
  j["subjects"] = subjects;
  std::ofstream out(path);
  require(out.good(), ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
  require(out.good(), ErrorCode::Io, "write to '" + path + "' failed");
}

}  // namespace tetra
