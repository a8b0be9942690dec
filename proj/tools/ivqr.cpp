#include "ivqr/alt_inference.hpp"
#include "ivqr/bootstrap.hpp"
#include "ivqr/dgp.hpp"
#include "ivqr/estimator.hpp"
#include "ivqr/instruments.hpp"
#include "ivqr/io.hpp"
#include "ivqr/network.hpp"
#include "ivqr/rng.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <iostream>
#include <sstream>

namespace {

using ivqr::io::Json;

// JSON config files for CLI11. Nested objects flatten to dash-joined option
// names, so {"instrument": {"h1": 0.3}} sets --instrument-h1. Keys apply to
// the subcommand being run; a top-level object named after a subcommand
// applies to that subcommand only. Command-line values take precedence.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App* root = nullptr) : root_(root) {}

  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    Json out = Json::object();
    for (const CLI::Option* opt : app->get_options()) {
      const std::string& name = opt->get_single_name();
      if (opt->get_lnames().empty() || name == "help" || name == "config") continue;
      if (opt->count() == 0 && (!default_also || opt->get_default_str().empty())) {
        if (default_also && opt->get_type_size() == 0) out[name] = false;
        continue;
      }
      if (opt->get_type_size() == 0) {
        out[name] = opt->count() > 0 ? opt->as<bool>() : opt->get_default_str() == "true";
        continue;
      }
      std::vector<std::string> values = opt->count() > 0 ? opt->results() : std::vector<std::string>{opt->get_default_str()};
      if (values.size() == 1 && values[0].size() > 1 && values[0].front() == '[') {
        std::string inner = values[0].substr(1, values[0].size() - 2);
        values.clear();
        std::stringstream s(inner);
        for (std::string part; std::getline(s, part, ',');) values.push_back(part);
      }
      Json arr = Json::array();
      for (const auto& v : values) arr.push_back(typed(v));
      out[name] = opt->get_expected_max() > 1 ? arr : arr.back();
    }
    return out.dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    Json j;
    try {
      j = Json::parse(input);
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError(std::string("config file: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    std::string active;
    if (root_)
      for (const CLI::App* sub : root_->get_subcommands()) active = sub->get_name();
    std::vector<CLI::ConfigItem> items;
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it->is_object() && root_ && root_->get_subcommand_no_throw(it.key())) {
        if (it.key() == active) flatten(*it, "", active, items);
        continue;
      }
      flatten(Json{{it.key(), *it}}, "", active, items);
    }
    return items;
  }

 private:
  const CLI::App* root_;

  static Json typed(const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    double d = 0.0;
    auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), d);
    if (ec == std::errc() && end == v.data() + v.size()) {
      long long k = 0;
      auto [e2, c2] = std::from_chars(v.data(), v.data() + v.size(), k);
      if (c2 == std::errc() && e2 == v.data() + v.size()) return k;
      return d;
    }
    return v;
  }

  static std::string scalar(const Json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  static void flatten(const Json& j, const std::string& prefix, const std::string& parent,
                      std::vector<CLI::ConfigItem>& items) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      std::string key = it.key();
      std::replace(key.begin(), key.end(), '.', '-');
      std::replace(key.begin(), key.end(), '_', '-');
      const std::string name = prefix.empty() ? key : prefix + "-" + key;
      if (it->is_object()) {
        flatten(*it, name, parent, items);
        continue;
      }
      CLI::ConfigItem item;
      if (!parent.empty()) item.parents = {parent};
      item.name = name;
      if (it->is_array())
        for (const auto& v : *it) item.inputs.push_back(scalar(v));
      else
        item.inputs.push_back(scalar(*it));
      items.push_back(std::move(item));
    }
  }
};

struct DataFlags {
  std::string path;
  bool no_intercept = false;
};

struct InstrumentFlags {
  std::string method = "np-full";
  std::optional<double> h1, h2, h3, h4;

  ivqr::instruments::Recipe recipe() const {
    ivqr::instruments::Recipe r;
    r.method = ivqr::instruments::parse_method(method);
    r.h1 = h1;
    r.h2 = h2;
    r.h3 = h3;
    r.h4 = h4;
    r.validate();
    return r;
  }
};

struct OutputFlags {
  std::string out;
  std::string format = "json";
};

void add_data(CLI::App* app, DataFlags& f) {
  app->add_option("--data", f.path, "CSV with cluster,y,x,w_1..,z_1..[,v]")->required();
  app->add_flag("--no-intercept", f.no_intercept, "Do not prepend an intercept to W");
}

void add_instrument(CLI::App* app, InstrumentFlags& f) {
  app->add_option("--instrument-method", f.method, "parametric, np-full or np-cluster")->capture_default_str();
  app->add_option("--instrument-h1", f.h1, "Bandwidth override");
  app->add_option("--instrument-h2", f.h2, "Bandwidth override");
  app->add_option("--instrument-h3", f.h3, "Bandwidth override (every cluster)");
  app->add_option("--instrument-h4", f.h4, "Bandwidth override (every cluster)");
}

void add_output(CLI::App* app, OutputFlags& f) {
  app->add_option("--out", f.out, "Output path (default stdout)");
  app->add_option("--format", f.format, "json or csv")->capture_default_str();
}

void add_config(CLI::App* app) { app->config_formatter(std::make_shared<JsonConfig>()); }

Json resolved(const CLI::App* app) { return Json::parse(app->config_to_str(true, false)); }

void emit(const OutputFlags& f, const std::string& text) {
  if (f.out.empty())
    std::cout << text;
  else
    ivqr::io::write_file(f.out, text);
}

ivqr::ClusteredDataset load(const DataFlags& f) {
  ivqr::io::CsvOptions o;
  o.intercept = !f.no_intercept;
  return ivqr::io::load_csv(f.path, o);
}

std::vector<double> expand(std::vector<double> values, std::size_t count, const char* what) {
  if (values.size() == 1 && count > 1) values.assign(count, values[0]);
  if (values.size() != count)
    throw ivqr::Error(ivqr::ErrorCode::invalid_argument, std::string("need one ") + what + " per quantile index");
  return values;
}

int run(int argc, char** argv) {
  CLI::App app{"Instrumental-variable quantile regression with few clusters"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "JSON file of flag values; command-line flags win");
  app.config_formatter(std::make_shared<JsonConfig>(&app));

  // fit
  DataFlags fit_data;
  InstrumentFlags fit_inst;
  OutputFlags fit_out;
  std::vector<double> fit_taus{0.5};
  double fit_lo = -3.0, fit_hi = 1.0, fit_step = 0.01, fit_a1 = 1.0;
  std::optional<double> fit_beta0;
  std::string fit_profile_out;
  CLI::App* fit = app.add_subcommand("fit", "Profiled IVQR estimate");
  add_config(fit);
  add_data(fit, fit_data);
  add_instrument(fit, fit_inst);
  add_output(fit, fit_out);
  fit->add_option("--tau", fit_taus, "Quantile indices")->capture_default_str();
  fit->add_option("--grid-min", fit_lo)->capture_default_str();
  fit->add_option("--grid-max", fit_hi)->capture_default_str();
  fit->add_option("--grid-step", fit_step)->capture_default_str();
  fit->add_option("--a1", fit_a1, "Profile norm weight")->capture_default_str();
  fit->add_option("--beta0", fit_beta0, "Value at which instruments are built (default: parametric pilot)");
  fit->add_option("--profile-out", fit_profile_out, "CSV of profile norms per grid point");

  // test and ci share the bootstrap surface
  DataFlags test_data, ci_data;
  InstrumentFlags test_inst, ci_inst;
  OutputFlags test_out, ci_out;
  std::vector<std::string> test_methods{"t-cr"};
  std::vector<double> test_taus{0.5}, test_beta0;
  double test_alpha = 0.10, test_lo = -3.0, test_hi = 1.0, test_step = 0.01, test_a1 = 1.0;
  std::string test_mode = "auto";
  std::size_t test_draws = 300;
  std::uint64_t test_seed = 0;
  CLI::App* test = app.add_subcommand("test", "Hypothesis test of beta(tau) = beta0");
  add_config(test);
  add_data(test, test_data);
  add_instrument(test, test_inst);
  add_output(test, test_out);
  test->add_option("--method", test_methods, "t, t-cr, ar, ar-cr, t-std, im, crs")->capture_default_str();
  test->add_option("--tau", test_taus, "Quantile indices")->capture_default_str();
  test->add_option("--beta0", test_beta0, "Null value(s)")->required();
  test->add_option("--alpha", test_alpha)->capture_default_str();
  test->add_option("--mode", test_mode, "auto, enumerate or sample")->capture_default_str();
  test->add_option("--draws", test_draws, "Sign draws in sample mode")->capture_default_str();
  test->add_option("--seed", test_seed)->capture_default_str();
  test->add_option("--grid-min", test_lo)->capture_default_str();
  test->add_option("--grid-max", test_hi)->capture_default_str();
  test->add_option("--grid-step", test_step)->capture_default_str();
  test->add_option("--a1", test_a1)->capture_default_str();

  std::vector<std::string> ci_methods{"t-cr"};
  std::vector<double> ci_taus{0.5};
  double ci_alpha = 0.10, ci_lo = -3.0, ci_hi = 1.0, ci_step = 0.01, ci_profile_step = 0.01;
  std::string ci_mode = "auto";
  std::size_t ci_draws = 300;
  std::uint64_t ci_seed = 0;
  CLI::App* ci = app.add_subcommand("ci", "Confidence set by test inversion");
  add_config(ci);
  add_data(ci, ci_data);
  add_instrument(ci, ci_inst);
  add_output(ci, ci_out);
  ci->add_option("--method", ci_methods, "t, t-cr, ar or ar-cr")->capture_default_str();
  ci->add_option("--tau", ci_taus, "Quantile indices, one set each")->capture_default_str();
  ci->add_option("--alpha", ci_alpha)->capture_default_str();
  ci->add_option("--mode", ci_mode)->capture_default_str();
  ci->add_option("--draws", ci_draws)->capture_default_str();
  ci->add_option("--seed", ci_seed)->capture_default_str();
  ci->add_option("--grid-min", ci_lo, "Lowest null value")->capture_default_str();
  ci->add_option("--grid-max", ci_hi, "Highest null value")->capture_default_str();
  ci->add_option("--step", ci_step, "Null grid step")->capture_default_str();
  ci->add_option("--profile-step", ci_profile_step, "Estimator grid step on the same range")->capture_default_str();

  // simulate
  OutputFlags sim_out;
  InstrumentFlags sim_inst;
  int sim_dgp = 1, sim_j = 9, sim_dz = 1, sim_l = 10, sim_reps = 500;
  long long sim_n = 500;
  double sim_pi = 1.0, sim_r = 4.0, sim_alpha = 0.10, sim_half = 1.0, sim_gstep = 0.01;
  std::size_t sim_draws = 300;
  std::uint64_t sim_seed = 0;
  std::vector<double> sim_taus{0.1, 0.25, 0.5, 0.75, 0.9};
  std::vector<std::string> sim_methods{"t-cr", "t", "ar", "t-std", "im", "crs"}, sim_hyp{"H0", "H1"};
  std::string sim_mode = "sample", sim_adj = "within", sim_eigens = "largest", sim_dump;
  CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo rejection rates");
  add_config(simulate);
  add_output(simulate, sim_out);
  add_instrument(simulate, sim_inst);
  simulate->add_option("--dgp", sim_dgp, "1 or 2")->capture_default_str()->check(CLI::IsMember({1, 2}));
  simulate->add_option("--n", sim_n)->capture_default_str();
  simulate->add_option("--J", sim_j, "Clusters (DGP 1)")->capture_default_str();
  simulate->add_option("--dz", sim_dz, "Instruments (DGP 1)")->capture_default_str();
  simulate->add_option("--pi", sim_pi, "Instrument strength (DGP 1)")->capture_default_str();
  simulate->add_option("--r", sim_r, "Size heterogeneity (DGP 1)")->capture_default_str();
  simulate->add_option("--L", sim_l, "Spectral clusters (DGP 2)")->capture_default_str();
  simulate->add_option("--adjacency-op", sim_adj, "within or as-written (DGP 2)")->capture_default_str();
  simulate->add_option("--eigens", sim_eigens, "largest or smallest (DGP 2)")->capture_default_str();
  simulate->add_option("--reps", sim_reps)->capture_default_str();
  simulate->add_option("--draws", sim_draws)->capture_default_str();
  simulate->add_option("--tau", sim_taus)->capture_default_str();
  simulate->add_option("--alpha", sim_alpha)->capture_default_str();
  simulate->add_option("--method", sim_methods)->capture_default_str();
  simulate->add_option("--hypothesis", sim_hyp, "H0 and/or H1")->capture_default_str();
  simulate->add_option("--mode", sim_mode)->capture_default_str();
  simulate->add_option("--grid-half-width", sim_half, "Estimator grid around the true value")->capture_default_str();
  simulate->add_option("--grid-step", sim_gstep)->capture_default_str();
  simulate->add_option("--seed", sim_seed)->capture_default_str();
  simulate->add_option("--dump-data", sim_dump, "Directory for one CSV per replication");

  // cluster
  OutputFlags cl_out;
  std::string cl_edges, cl_eigens = "largest";
  long long cl_nodes = 0;
  int cl_l = 10;
  std::uint64_t cl_seed = 0;
  CLI::App* cluster = app.add_subcommand("cluster", "Spectral partition of a network");
  add_config(cluster);
  cluster->add_option("--edges", cl_edges, "Two-column edge list")->required();
  cluster->add_option("--nodes", cl_nodes, "Node count if larger than the largest id + 1");
  cluster->add_option("--L", cl_l)->capture_default_str();
  cluster->add_option("--seed", cl_seed)->capture_default_str();
  cluster->add_option("--eigens", cl_eigens, "largest or smallest")->capture_default_str();
  cluster->add_option("--out", cl_out.out, "Output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  using namespace ivqr;
  if (fit->parsed()) {
    ClusteredDataset data = load(fit_data);
    const instruments::Recipe recipe = fit_inst.recipe();
    const estimation::ProfileGrid grid{fit_lo, fit_hi, fit_step};
    grid.validate();
    std::vector<instruments::InstrumentSet> inst;
    for (double tau : fit_taus) {
      double b0 = 0.0;
      if (fit_beta0) {
        b0 = *fit_beta0;
      } else if (recipe.method != instruments::Method::parametric) {
        instruments::Recipe pilot = recipe;
        pilot.method = instruments::Method::parametric;
        b0 = estimation::estimate_tau(data, instruments::build(data, pilot, tau, 0.0), grid, fit_a1).beta;
      }
      inst.push_back(instruments::build(data, recipe, tau, b0));
    }
    estimation::IvqrFit result = estimation::estimate(data, inst, grid, fit_a1);
    emit(fit_out, io::emit_fit(result, io::parse_format(fit_out.format), resolved(fit)));
    if (!fit_profile_out.empty()) {
      std::ostringstream s;
      s << "tau,b,norm\n";
      for (const auto& t : result.taus)
        for (std::size_t k = 0; k < t.grid.size(); ++k)
          s << io::format_double(t.tau) << ',' << io::format_double(t.grid[k]) << ','
            << io::format_double(t.profile_norms[k]) << '\n';
      io::write_file(fit_profile_out, s.str());
    }
    return 0;
  }

  if (test->parsed()) {
    ClusteredDataset data = load(test_data);
    bootstrap::Options o;
    o.taus = test_taus;
    o.alpha = test_alpha;
    o.mode = bootstrap::parse_mode(test_mode);
    o.draws = test_draws;
    o.seed = test_seed;
    o.grid = {test_lo, test_hi, test_step};
    o.recipe = test_inst.recipe();
    o.a1 = test_a1;
    o.validate();
    const std::vector<double> beta0 = expand(test_beta0, test_taus.size(), "beta0");
    std::vector<bootstrap::Method> methods;
    for (const auto& m : test_methods) methods.push_back(bootstrap::parse_method(m));
    std::vector<bootstrap::TestResult> results;
    std::optional<bootstrap::GradientBootstrap> gb;
    for (auto m : methods) {
      if (m == bootstrap::Method::im || m == bootstrap::Method::crs) {
        for (std::size_t k = 0; k < test_taus.size(); ++k) {
          auto groups = alt::group_estimates(data, o.recipe, test_taus[k], beta0[k], o.grid);
          results.push_back(m == bootstrap::Method::im
                                ? alt::im_test(groups, beta0[k], o.alpha)
                                : alt::crs_test(groups, beta0[k], o.alpha, o.mode, o.draws,
                                                rng::derive(o.seed, rng::tag("crs"))));
        }
        continue;
      }
      if (!gb) gb.emplace(data, o, beta0);
      results.push_back(m == bootstrap::Method::t_std ? alt::t_std_test(*gb) : gb->run(m));
    }
    emit(test_out, io::emit_results(results, io::parse_format(test_out.format), resolved(test)));
    return 0;
  }

  if (ci->parsed()) {
    ClusteredDataset data = load(ci_data);
    std::vector<bootstrap::Method> methods;
    for (const auto& m : ci_methods) methods.push_back(bootstrap::parse_method(m));
    std::vector<bootstrap::ConfidenceSet> sets;
    for (double tau : ci_taus) {
      bootstrap::Options o;
      o.taus = {tau};
      o.alpha = ci_alpha;
      o.mode = bootstrap::parse_mode(ci_mode);
      o.draws = ci_draws;
      o.seed = ci_seed;
      o.grid = {ci_lo, ci_hi, ci_profile_step};
      o.recipe = ci_inst.recipe();
      for (auto& cs : bootstrap::confidence_sets(data, o, methods, {ci_lo, ci_hi, ci_step})) sets.push_back(std::move(cs));
    }
    emit(ci_out, io::emit_confidence_sets(sets, io::parse_format(ci_out.format), resolved(ci)));
    return 0;
  }

  if (simulate->parsed()) {
    sim::DgpConfig dgp;
    if (sim_dgp == 1) {
      sim::Dgp1Config c;
      c.n = sim_n;
      c.clusters = sim_j;
      c.dz = sim_dz;
      c.pi = sim_pi;
      c.r = sim_r;
      c.validate();
      dgp = c;
    } else {
      sim::Dgp2Config c;
      c.n = sim_n;
      c.L = sim_l;
      c.adjacency = sim::parse_adjacency_op(sim_adj);
      c.eigens = sim_eigens == "smallest" ? network::Eigens::smallest : network::Eigens::largest;
      if (sim_eigens != "smallest" && sim_eigens != "largest")
        throw Error(ErrorCode::invalid_argument, "eigens must be largest or smallest");
      c.validate();
      dgp = c;
    }
    sim::McConfig mc;
    mc.replications = sim_reps;
    mc.draws = sim_draws;
    mc.taus = sim_taus;
    mc.alpha = sim_alpha;
    mc.methods.clear();
    for (const auto& m : sim_methods) mc.methods.push_back(bootstrap::parse_method(m));
    mc.hypotheses.clear();
    for (const auto& h : sim_hyp) {
      if (h == "H0" || h == "h0")
        mc.hypotheses.push_back(sim::Hypothesis::h0);
      else if (h == "H1" || h == "h1")
        mc.hypotheses.push_back(sim::Hypothesis::h1);
      else
        throw Error(ErrorCode::invalid_argument, "hypothesis must be H0 or H1");
    }
    mc.mode = bootstrap::parse_mode(sim_mode);
    mc.grid_half_width = sim_half;
    mc.grid_step = sim_gstep;
    mc.recipe = sim_inst.recipe();
    mc.seed = sim_seed;
    mc.validate();
    if (!sim_dump.empty())
      for (int r = 0; r < sim_reps; ++r) {
        char name[32];
        std::snprintf(name, sizeof name, "rep_%05d.csv", r);
        io::save_csv(std::filesystem::path(sim_dump) / name, sim::replication_data(dgp, sim_seed, r));
      }
    sim::McTable table = sim::monte_carlo(dgp, mc);
    emit(sim_out, io::emit_table(table, io::parse_format(sim_out.format), resolved(simulate)));
    return 0;
  }

  if (cluster->parsed()) {
    network::Network net = io::load_edges(cl_edges, cl_nodes);
    if (cl_eigens != "smallest" && cl_eigens != "largest")
      throw Error(ErrorCode::invalid_argument, "eigens must be largest or smallest");
    const auto eig = cl_eigens == "smallest" ? network::Eigens::smallest : network::Eigens::largest;
    network::Partition p = network::spectral_partition(net, cl_l, cl_seed, eig);
    std::ostringstream s;
    io::write_labels(s, p);
    emit(cl_out, s.str());
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ivqr::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ivqr::is_validation_error(e.code()) ? 2 : 3;
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
