#include "vilo/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace vilo {

namespace {

using nlohmann::json;

json vec_to_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Eigen::VectorXd json_to_vec(const json& a, int expected, const std::string& ctx) {
  if (!a.is_array() || static_cast<int>(a.size()) != expected) {
    throw DatasetError("dataset: field " + ctx + " must be an array of " +
                       std::to_string(expected) + " numbers");
  }
  Eigen::VectorXd v(expected);
  for (int i = 0; i < expected; ++i) v(i) = a[i].get<double>();
  return v;
}

json quat_to_json(const UnitQuaternion& q) { return vec_to_json(q.coeffs()); }

UnitQuaternion json_to_quat(const json& a, const std::string& ctx) {
  const Eigen::VectorXd v = json_to_vec(a, 4, ctx);
  return UnitQuaternion(v(0), v.segment<3>(1)).normalized();
}

json header_to_json(const DatasetHeader& h) {
  json j;
  j["type"] = "header";
  j["schema"] = h.schema;
  j["rates"] = {{"imu", h.imu_rate}, {"leg", h.leg_rate}, {"cam", h.cam_rate}};
  j["gravity_w"] = vec_to_json(h.gravity_w);
  json legs = json::array();
  for (const auto& g : h.legs) {
    legs.push_back({{"hip_offset", vec_to_json(g.hip_offset)},
                    {"abduction_offset", g.abduction_offset},
                    {"thigh_length", g.thigh_length},
                    {"calf_length_nominal", g.calf_length_nominal},
                    {"side_sign", g.side_sign}});
  }
  j["legs"] = legs;
  Eigen::Matrix<double, 9, 1> rbc;
  Eigen::Map<Eigen::Matrix3d>(rbc.data()) = h.camera.r_bc;  // column-major
  j["camera"] = {{"r_bc", vec_to_json(rbc)},
                 {"p_bc", vec_to_json(h.camera.p_bc)},
                 {"obs_noise_std", h.camera.obs_noise_std},
                 {"max_tan", h.camera.max_tan},
                 {"min_depth", h.camera.min_depth},
                 {"max_depth", h.camera.max_depth}};
  j["initial_state"] = {{"p", vec_to_json(h.init_p)},
                        {"q", quat_to_json(h.init_q)},
                        {"v", vec_to_json(h.init_v)}};
  return j;
}

DatasetHeader header_from_json(const json& j) {
  if (!j.contains("schema") || !j["schema"].is_string()) {
    throw DatasetError("dataset header: missing schema field");
  }
  DatasetHeader h;
  h.schema = j["schema"].get<std::string>();
  if (h.schema != kDatasetSchema) {
    throw DatasetError("dataset: unsupported schema version '" + h.schema + "' (expected '" +
                       std::string(kDatasetSchema) + "')");
  }
  h.imu_rate = j.at("rates").at("imu").get<double>();
  h.leg_rate = j.at("rates").at("leg").get<double>();
  h.cam_rate = j.at("rates").at("cam").get<double>();
  h.gravity_w = json_to_vec(j.at("gravity_w"), 3, "gravity_w");
  const auto& legs = j.at("legs");
  if (!legs.is_array() || legs.size() != kNumLegs) {
    throw DatasetError("dataset header: legs must be an array of 4");
  }
  for (int i = 0; i < kNumLegs; ++i) {
    const auto& g = legs[i];
    h.legs[i].hip_offset = json_to_vec(g.at("hip_offset"), 3, "hip_offset");
    h.legs[i].abduction_offset = g.at("abduction_offset").get<double>();
    h.legs[i].thigh_length = g.at("thigh_length").get<double>();
    h.legs[i].calf_length_nominal = g.at("calf_length_nominal").get<double>();
    h.legs[i].side_sign = g.at("side_sign").get<int>();
  }
  const auto& cam = j.at("camera");
  const Eigen::VectorXd rbc = json_to_vec(cam.at("r_bc"), 9, "camera.r_bc");
  h.camera.r_bc = Eigen::Map<const Eigen::Matrix3d>(rbc.data());
  h.camera.p_bc = json_to_vec(cam.at("p_bc"), 3, "camera.p_bc");
  h.camera.obs_noise_std = cam.at("obs_noise_std").get<double>();
  h.camera.max_tan = cam.at("max_tan").get<double>();
  h.camera.min_depth = cam.at("min_depth").get<double>();
  h.camera.max_depth = cam.at("max_depth").get<double>();
  const auto& init = j.at("initial_state");
  h.init_p = json_to_vec(init.at("p"), 3, "initial_state.p");
  h.init_q = json_to_quat(init.at("q"), "initial_state.q");
  h.init_v = json_to_vec(init.at("v"), 3, "initial_state.v");
  return h;
}

void check_monotone(const char* stream, const std::vector<double>& ts) {
  for (size_t i = 1; i < ts.size(); ++i) {
    if (!(ts[i] > ts[i - 1])) {
      throw DatasetError(std::string("dataset: non-monotone timestamps in stream '") + stream +
                         "' at record " + std::to_string(i + 1));
    }
  }
}

void check_rate(const char* stream, const std::vector<double>& ts, double rate) {
  if (ts.size() < 2 || rate <= 0.0) return;
  const double observed = (ts.size() - 1) / (ts.back() - ts.front());
  if (std::abs(observed - rate) > 0.01 * rate) {
    std::ostringstream os;
    os << "dataset: stream '" << stream << "' observed rate " << observed
       << " Hz deviates more than 1% from header rate " << rate << " Hz";
    throw DatasetError(os.str());
  }
}

}  // namespace

void Dataset::validate() const {
  if (imu.empty()) throw DatasetError("dataset: missing stream 'imu'");
  if (leg.empty()) throw DatasetError("dataset: missing stream 'leg'");

  std::vector<double> ts;
  ts.reserve(imu.size());
  for (const auto& r : imu) ts.push_back(r.t);
  check_monotone("imu", ts);
  check_rate("imu", ts, header.imu_rate);

  ts.clear();
  for (const auto& r : leg) ts.push_back(r.t);
  check_monotone("leg", ts);
  check_rate("leg", ts, header.leg_rate);

  ts.clear();
  for (const auto& r : cam) ts.push_back(r.t);
  check_monotone("cam", ts);
  check_rate("cam", ts, header.cam_rate);

  ts.clear();
  for (const auto& r : truth) ts.push_back(r.t);
  check_monotone("truth", ts);
}

void save_dataset(const Dataset& d, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw DatasetError("dataset: cannot open '" + tmp + "' for writing");
    out << header_to_json(d.header).dump() << "\n";
    for (const auto& r : d.imu) {
      json j;
      j["type"] = "imu";
      j["t"] = r.t;
      j["a"] = vec_to_json(r.accel);
      j["w"] = vec_to_json(r.gyro);
      out << j.dump() << "\n";
    }
    for (const auto& r : d.leg) {
      json j;
      j["type"] = "leg";
      j["t"] = r.t;
      Eigen::Matrix<double, 12, 1> phi, dphi;
      for (int l = 0; l < kNumLegs; ++l) {
        phi.segment<3>(3 * l) = r.phi[l];
        dphi.segment<3>(3 * l) = r.dphi[l];
      }
      j["phi"] = vec_to_json(phi);
      j["dphi"] = vec_to_json(dphi);
      j["c"] = {r.contact[0], r.contact[1], r.contact[2], r.contact[3]};
      out << j.dump() << "\n";
    }
    for (const auto& r : d.cam) {
      json j;
      j["type"] = "cam";
      j["t"] = r.t;
      json obs = json::array();
      for (const auto& o : r.obs) obs.push_back({o.id, o.uv.x(), o.uv.y()});
      j["obs"] = obs;
      out << j.dump() << "\n";
    }
    for (const auto& r : d.truth) {
      json j;
      j["type"] = "truth";
      j["t"] = r.t;
      j["p"] = vec_to_json(r.p);
      j["q"] = quat_to_json(r.q);
      j["v"] = vec_to_json(r.v);
      j["rho"] = vec_to_json(r.rho);
      j["c"] = {r.contact[0], r.contact[1], r.contact[2], r.contact[3]};
      j["slip"] = {r.slip[0], r.slip[1], r.slip[2], r.slip[3]};
      out << j.dump() << "\n";
    }
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw DatasetError("dataset: cannot rename '" + tmp + "' to '" + path + "'");
  }
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("dataset: cannot open '" + path + "'");
  Dataset d;
  std::string line;
  size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DatasetError("dataset: line " + std::to_string(line_no) + ": " + e.what());
    }
    const std::string type = j.value("type", "");
    try {
      if (type == "header") {
        d.header = header_from_json(j);
        have_header = true;
      } else if (type == "imu") {
        ImuRecord r;
        r.t = j.at("t").get<double>();
        r.accel = json_to_vec(j.at("a"), 3, "a");
        r.gyro = json_to_vec(j.at("w"), 3, "w");
        d.imu.push_back(r);
      } else if (type == "leg") {
        LegRecord r;
        r.t = j.at("t").get<double>();
        const Eigen::VectorXd phi = json_to_vec(j.at("phi"), 12, "phi");
        const Eigen::VectorXd dphi = json_to_vec(j.at("dphi"), 12, "dphi");
        const auto& c = j.at("c");
        if (!c.is_array() || c.size() != kNumLegs) {
          throw DatasetError("leg record: c must be an array of 4");
        }
        for (int l = 0; l < kNumLegs; ++l) {
          r.phi[l] = phi.segment<3>(3 * l);
          r.dphi[l] = dphi.segment<3>(3 * l);
          r.contact[l] = c[l].get<int>();
        }
        d.leg.push_back(r);
      } else if (type == "cam") {
        CamRecord r;
        r.t = j.at("t").get<double>();
        for (const auto& o : j.at("obs")) {
          if (!o.is_array() || o.size() != 3) {
            throw DatasetError("cam record: each obs must be [id, u, v]");
          }
          r.obs.push_back({o[0].get<int>(), Eigen::Vector2d(o[1].get<double>(), o[2].get<double>())});
        }
        d.cam.push_back(r);
      } else if (type == "truth") {
        TruthRecord r;
        r.t = j.at("t").get<double>();
        r.p = json_to_vec(j.at("p"), 3, "p");
        r.q = json_to_quat(j.at("q"), "q");
        r.v = json_to_vec(j.at("v"), 3, "v");
        r.rho = json_to_vec(j.at("rho"), 4, "rho");
        const auto& c = j.at("c");
        const auto& s = j.at("slip");
        for (int l = 0; l < kNumLegs; ++l) {
          r.contact[l] = c[l].get<int>();
          r.slip[l] = s[l].get<int>();
        }
        d.truth.push_back(r);
      } else {
        throw DatasetError("unknown record type '" + type + "'");
      }
    } catch (const json::exception& e) {
      throw DatasetError("dataset: line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DatasetError& e) {
      throw DatasetError("dataset: line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) throw DatasetError("dataset: missing header line");
  d.validate();
  return d;
}

}  // namespace vilo
