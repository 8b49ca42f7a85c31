#include "hsiseg/checkpoint.hpp"

#include <json.hpp>
#include <set>

#include "hsiseg/archive.hpp"

namespace hsiseg {

namespace {

using nlohmann::json;

void put_conv(ArchiveWriter& w, const std::string& prefix, const ConvParams& p) {
  w.put_f64(prefix + "/weight",
            {static_cast<uint64_t>(p.oc()), static_cast<uint64_t>(p.ic()),
             static_cast<uint64_t>(p.kh()), static_cast<uint64_t>(p.kw())},
            p.weight.v.data(), p.weight.size());
  w.put_f64(prefix + "/bias", p.bias);
}

ConvParams read_conv(const Archive& a, const std::string& prefix) {
  const auto& d = a.dims(prefix + "/weight");
  if (d.size() != 4) throw ArchiveError("checkpoint: '" + prefix + "/weight' is not 4-D");
  ConvParams p = make_conv(static_cast<int>(d[0]), static_cast<int>(d[1]),
                           static_cast<int>(d[2]), static_cast<int>(d[3]));
  const auto& wv = a.f64(prefix + "/weight");
  if (wv.size() != p.weight.size()) {
    throw ArchiveError("checkpoint: '" + prefix + "/weight' payload size mismatch");
  }
  p.weight.v = wv;
  const auto& bv = a.f64(prefix + "/bias");
  if (bv.size() != static_cast<size_t>(p.oc())) {
    throw ArchiveError("checkpoint: '" + prefix + "/bias' has wrong length");
  }
  p.bias = bv;
  return p;
}

const char* norm_kind_name(NormKind k) {
  switch (k) {
    case NormKind::None: return "none";
    case NormKind::BatchNorm: return "batchnorm";
    case NormKind::Continual: return "continual";
  }
  return "none";
}

}  // namespace

std::string network_config_to_json(const NetworkConfig& c) {
  json j;
  j["in_channels"] = c.in_channels;
  j["base_width"] = c.base_width;
  j["depth"] = c.depth;
  j["num_categories"] = c.num_categories;
  j["bn_momentum"] = c.bn_momentum;
  j["norm_eps"] = c.norm_eps;
  j["cbrn_eta"] = c.cbrn_eta;
  return j.dump(2);
}

NetworkConfig network_config_from_json(const std::string& text) {
  json j = json::parse(text);
  NetworkConfig c;
  c.in_channels = j.at("in_channels").get<int>();
  c.base_width = j.at("base_width").get<int>();
  c.depth = j.at("depth").get<int>();
  c.num_categories = j.at("num_categories").get<int>();
  c.bn_momentum = j.at("bn_momentum").get<double>();
  c.norm_eps = j.at("norm_eps").get<double>();
  c.cbrn_eta = j.at("cbrn_eta").get<double>();
  c.validate();
  return c;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  ArchiveWriter w;
  w.put_scalar_i64("meta/format_version", kCheckpointFormatVersion);
  w.put_text("meta/config", network_config_to_json(ck.net.config));
  std::vector<int64_t> labels(ck.label_space.begin(), ck.label_space.end());
  w.put_i64("meta/label_space", labels);
  w.put_scalar_i64("meta/stage_index", ck.stage_index);
  w.put_scalar_i64("meta/seed", static_cast<int64_t>(ck.seed));

  for (const Layer& L : ck.net.layers) {
    const std::string prefix = "layers/" + L.path;
    put_conv(w, prefix, L.weights);
    if (L.rigidity) put_conv(w, prefix + "/rigidity", *L.rigidity);
    w.put_text(prefix + "/norm/kind", norm_kind_name(L.norm_kind));
    if (L.norm_kind == NormKind::BatchNorm) {
      w.put_f64(prefix + "/norm/mean", L.bn.mean);
      w.put_f64(prefix + "/norm/var", L.bn.var);
      w.put_scalar_f64(prefix + "/norm/momentum", L.bn.momentum);
      w.put_scalar_f64(prefix + "/norm/eps", L.bn.eps);
    } else if (L.norm_kind == NormKind::Continual) {
      w.put_f64(prefix + "/norm/mu_c", L.cbrn.mu_c);
      w.put_f64(prefix + "/norm/sigma_c", L.cbrn.sigma_c);
      w.put_scalar_f64(prefix + "/norm/eta", L.cbrn.eta);
      w.put_scalar_f64(prefix + "/norm/eps", L.cbrn.eps);
      w.put_scalar_f64(prefix + "/norm/r_max", L.cbrn.r_max);
      w.put_scalar_f64(prefix + "/norm/d_max", L.cbrn.d_max);
    }
  }
  w.write_file(path);
}

Checkpoint load_checkpoint(const std::string& path) {
  const Archive a = Archive::read_file(path);
  const int64_t version = a.scalar_i64("meta/format_version");
  if (version != kCheckpointFormatVersion) {
    throw ArchiveError("checkpoint: unsupported format version " +
                       std::to_string(version) + " in " + path);
  }
  Checkpoint ck;
  const NetworkConfig cfg = network_config_from_json(a.text("meta/config"));
  ck.net = build_network(cfg, 0);
  for (int64_t v : a.i64("meta/label_space")) ck.label_space.push_back(static_cast<int>(v));
  ck.stage_index = static_cast<int>(a.scalar_i64("meta/stage_index"));
  ck.seed = static_cast<uint64_t>(a.scalar_i64("meta/seed"));
  if (ck.label_space.size() != static_cast<size_t>(cfg.num_categories)) {
    throw ArchiveError("checkpoint: label_space length does not match num_categories");
  }

  std::set<std::string> expected = {"meta/format_version", "meta/config",
                                    "meta/label_space", "meta/stage_index",
                                    "meta/seed"};
  for (Layer& L : ck.net.layers) {
    const std::string prefix = "layers/" + L.path;
    const std::string kind = a.text(prefix + "/norm/kind");
    expected.insert(prefix + "/weight");
    expected.insert(prefix + "/bias");
    expected.insert(prefix + "/norm/kind");

    ConvParams p = read_conv(a, prefix);
    if (!p.weight.same_shape(L.weights.weight)) {
      throw ArchiveError("checkpoint: '" + prefix + "/weight' shape " +
                         p.weight.shape_str() + " does not match topology " +
                         L.weights.weight.shape_str());
    }
    L.weights = std::move(p);
    if (a.has(prefix + "/rigidity/weight")) {
      L.rigidity = read_conv(a, prefix + "/rigidity");
      if (!L.rigidity->weight.same_shape(L.weights.weight)) {
        throw ArchiveError("checkpoint: '" + prefix + "/rigidity/weight' shape mismatch");
      }
      expected.insert(prefix + "/rigidity/weight");
      expected.insert(prefix + "/rigidity/bias");
    }

    const size_t C = static_cast<size_t>(L.weights.oc());
    if (kind == "none") {
      L.norm_kind = NormKind::None;
    } else if (kind == "batchnorm") {
      L.norm_kind = NormKind::BatchNorm;
      L.bn.mean = a.f64(prefix + "/norm/mean");
      L.bn.var = a.f64(prefix + "/norm/var");
      L.bn.momentum = a.scalar_f64(prefix + "/norm/momentum");
      L.bn.eps = a.scalar_f64(prefix + "/norm/eps");
      if (L.bn.mean.size() != C || L.bn.var.size() != C) {
        throw ArchiveError("checkpoint: '" + prefix + "/norm' has wrong channel count");
      }
      for (const char* k : {"mean", "var", "momentum", "eps"}) {
        expected.insert(prefix + "/norm/" + std::string(k));
      }
    } else if (kind == "continual") {
      L.norm_kind = NormKind::Continual;
      L.cbrn.mu_c = a.f64(prefix + "/norm/mu_c");
      L.cbrn.sigma_c = a.f64(prefix + "/norm/sigma_c");
      L.cbrn.eta = a.scalar_f64(prefix + "/norm/eta");
      L.cbrn.eps = a.scalar_f64(prefix + "/norm/eps");
      L.cbrn.r_max = a.scalar_f64(prefix + "/norm/r_max");
      L.cbrn.d_max = a.scalar_f64(prefix + "/norm/d_max");
      L.bn = BNState{};
      if (L.cbrn.mu_c.size() != C || L.cbrn.sigma_c.size() != C) {
        throw ArchiveError("checkpoint: '" + prefix + "/norm' has wrong channel count");
      }
      for (const char* k : {"mu_c", "sigma_c", "eta", "eps", "r_max", "d_max"}) {
        expected.insert(prefix + "/norm/" + std::string(k));
      }
    } else {
      throw ArchiveError("checkpoint: unknown norm kind '" + kind + "' at " + prefix);
    }
  }

  for (const std::string& k : a.keys()) {
    if (!expected.count(k)) {
      throw ArchiveError("checkpoint: unexpected key '" + k + "' in " + path);
    }
  }
  return ck;
}

}  // namespace hsiseg
