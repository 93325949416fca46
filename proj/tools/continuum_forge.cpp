// continuum-forge: command-line front end for tract construction, verification and rendering.
//
// Exit status: 0 on success, 1 when a verification or construction step fails (the
// certificate names the step), 2 on input errors.

#include "cforge/conformal.hpp"
#include "cforge/construction_engine.hpp"
#include "cforge/error.hpp"
#include "cforge/julia_continua.hpp"
#include "cforge/tract_geometry.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace cforge;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitInput = 2;

const double kPi = std::acos(-1.0);

struct RunConfig {
    std::string config;
    std::string out = ".";
    std::optional<std::uint64_t> seed;
    std::optional<double> tol;
    std::optional<std::size_t> stages;
};

json read_json(const std::string& path) {
    if (path.empty()) throw InputError("--config is required");
    std::ifstream in(path);
    if (!in) throw InputError("cannot read " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw InputError(path + ": " + e.what());
    }
}

void write_file(const RunConfig& rc, const std::string& name, const std::string& content) {
    std::error_code ec;
    fs::create_directories(rc.out, ec);
    std::ofstream out(fs::path(rc.out) / name, std::ios::binary);
    if (!out) throw InputError("cannot write " + (fs::path(rc.out) / name).string());
    out << content;
}

std::string pretty(const json& j) { return j.dump(2) + "\n"; }

/// Sweeps run sequentially; the cap is validated and recorded so runs stay comparable.
std::size_t thread_cap() {
    const char* env = std::getenv("CONTINUUM_FORGE_THREADS");
    if (!env || !*env) return 1;
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw InputError("CONTINUUM_FORGE_THREADS must be a positive integer");
    return static_cast<std::size_t>(v);
}

std::string render_tract(const RectilinearTract& t) {
    SvgOptions style;
    style.show_translate = false;
    std::ostringstream svg;
    write_svg(svg, t, style);
    return svg.str();
}

std::string ledger_csv(const ConstructionState& s) {
    std::ostringstream out;
    out << "k,k_star,N,n,s,R,chi_over_pi,M,M_tilde,gamma,overrides,status\n";
    for (const auto& L : s.stages) {
        out << L.k << ',' << L.k_star << ',' << (L.N ? std::to_string(*L.N) : "") << ',' << L.n << ',' << L.s << ',';
        if (L.R)
            out << to_string(*L.R);
        else if (L.R_bound)
            out << ">=" << L.R_bound->str();
        out << ',' << (L.chi ? to_string(*L.chi) : "") << ',' << to_string(L.M) << ','
            << (L.M_tilde ? to_string(*L.M_tilde) : "") << ',' << (L.gamma ? std::to_string(*L.gamma) : "") << ',';
        for (std::size_t i = 0; i < L.overrides.size(); ++i) out << (i ? ";" : "") << L.overrides[i];
        out << ',' << L.status << '\n';
    }
    return out.str();
}

int cmd_build(const RunConfig& rc) {
    ConstructionConfig cfg = construction_config_from_json(read_json(rc.config));
    if (rc.seed) cfg.seed = *rc.seed;
    if (rc.tol) cfg.conformal_tol = *rc.tol;
    if (rc.stages) cfg.stages = *rc.stages;
    const std::size_t threads = thread_cap();

    ConstructionState state = cfg.scheme == Scheme::Bounded    ? build_bounded_tract(cfg)
                              : cfg.scheme == Scheme::Periodic ? build_periodic_tract(cfg)
                                                               : run_construction(cfg);
    json cert = certificate_json(state);
    cert["run"] = {{"command", "build"}, {"seed", cfg.seed}, {"threads", threads}};
    write_file(rc, "certificate.json", pretty(cert));
    write_file(rc, "ledger.csv", ledger_csv(state));
    if (state.tract) write_file(rc, "tract.svg", render_tract(*state.tract));
    if (state.candidate) write_file(rc, "candidate.svg", render_tract(*state.candidate));

    if (state.status == "complete") {
        std::cout << "build: complete, " << state.k() << " stages\n";
        return kExitOk;
    }
    std::cout << "build: failed at " << state.failed_step << ": " << state.failure << "\n";
    return kExitFailed;
}

bool is_half_strip(const RectilinearTract& t) {
    const auto& c = t.chain();
    return c.size() == 2 && c[0].x == c[1].x && c[0].y == -c[1].y;
}

/// Seeded uniform samples of T ∩ {x_lo <= Re <= x_hi} at distance >= margin from ∂T.
std::vector<cplx> tract_samples(const RectilinearTract& t, double x_lo, double x_hi, std::size_t count,
                                std::uint64_t seed, double margin) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(x_lo, x_hi);
    std::uniform_real_distribution<double> uy(to_double(t.min_y()) * kPi, to_double(t.max_y()) * kPi);
    std::vector<cplx> pts;
    for (std::size_t tries = 0; pts.size() < count && tries < 200 * count; ++tries) {
        cplx z(ux(rng), uy(rng));
        if (contains(t, z) && boundary_distance(t, z) >= margin) pts.push_back(z);
    }
    return pts;
}

struct Check {
    std::string name;
    bool passed = true;
    double worst = 0.0;  ///< worst margin; negative means violated
    std::string detail;
};

int cmd_verify(const RunConfig& rc) {
    const json input = read_json(rc.config);
    const json& tj = input.contains("tract") ? input.at("tract") : input;
    RectilinearTract t = tract_from_json(tj);
    const double tol = rc.tol.value_or(input.value("tol", 1e-6));
    const std::uint64_t seed = rc.seed.value_or(input.value("seed", std::uint64_t{1}));
    const std::size_t count = input.value("samples", std::size_t{1000});
    const double p = input.value("p", to_double(t.min_x()) + 1.0);
    const double x_hi = input.value("x_max", std::max(20.0, to_double(t.max_vertex_x()) + 4.0));
    const std::size_t threads = thread_cap();

    std::vector<Check> checks;
    auto report = validate_tract(t);
    {
        Check c{"validation", report.ok(), 0.0, ""};
        for (const auto& r : report.checks)
            if (!r.passed) c.detail += (c.detail.empty() ? "" : "; ") + r.name + ": " + r.detail;
        checks.push_back(c);
    }
    std::optional<ConformalMap> F;
    if (report.ok()) {
        try {
            F.emplace(map_to_halfplane(t, Normalization::fixed_point(cplx(p, 0.0)), tol, x_hi));
            checks.push_back({"conformal_accuracy", true, tol - F->accuracy().achieved, F->accuracy().backend});
        } catch (const AccuracyError& e) {
            checks.push_back({"conformal_accuracy", false, tol - e.achieved(), e.what()});
        }
    }
    if (F) {
        const std::vector<cplx> pts = tract_samples(t, to_double(t.min_x()), x_hi, count, seed, 1e-3);
        const double acc = std::max(F->accuracy().achieved, 1e-12);
        Check norm{"normalization", true, 0.0, ""};
        norm.worst = std::min(tol - std::abs((*F)(p) - p), 1e-8 - std::abs(std::arg(F->derivative(p))));
        norm.passed = norm.worst >= 0;
        Check expand{"expansion_inequality", true, INFINITY, "|F'(z)| >= Re F(z)/2 - 1e-8"};
        Check image{"image_in_halfplane", true, INFINITY, ""};
        Check round{"round_trip", true, INFINITY, ""};
        Check closed{"closed_form", true, INFINITY, "half-strip closed form, Re z <= 20"};
        for (const cplx& z : pts) {
            const cplx f = (*F)(z);
            const cplx d = F->derivative(z);
            expand.worst = std::min(expand.worst, std::abs(d) - f.real() / 2 + 1e-8);
            image.worst = std::min(image.worst, f.real());
            round.worst = std::min(round.worst, 2 * acc / std::abs(d) + 1e-9 - std::abs(F->inverse(f) - z));
            if (is_half_strip(t) && z.real() <= 20.0)
                closed.worst = std::min(closed.worst,
                                        tol - std::abs(f - half_strip_closed_form(to_double(t.min_x()), p, z)));
        }
        expand.passed = expand.worst >= 0;
        image.passed = image.worst > 0;
        round.passed = round.worst >= 0;
        closed.passed = closed.worst >= 0;
        checks.push_back(norm);
        checks.push_back(expand);
        checks.push_back(image);
        checks.push_back(round);
        if (is_half_strip(t)) checks.push_back(closed);
        Check sampled{"sample_count", pts.size() == count, double(pts.size()) - double(count), ""};
        checks.push_back(sampled);
    }

    json cert;
    cert["command"] = "verify";
    cert["tract"] = t;
    cert["p"] = p;
    cert["tol"] = tol;
    cert["seed"] = seed;
    cert["samples"] = count;
    cert["threads"] = threads;
    if (F) cert["backend"] = F->accuracy().backend, cert["achieved"] = F->accuracy().achieved;
    cert["checks"] = json::array();
    json failed = json::array();
    for (const auto& c : checks) {
        cert["checks"].push_back({{"name", c.name},
                                  {"passed", c.passed},
                                  {"worst_margin", std::isfinite(c.worst) ? json(c.worst) : json(nullptr)},
                                  {"detail", c.detail}});
        if (!c.passed) failed.push_back(c.name);
    }
    cert["status"] = failed.empty() ? "pass" : "fail";
    cert["failed"] = failed;
    write_file(rc, "certificate.json", pretty(cert));
    std::cout << "verify: " << (failed.empty() ? "all checks pass" : "failed " + failed.dump()) << "\n";
    return failed.empty() ? kExitOk : kExitFailed;
}

std::shared_ptr<const Model> model_from_json(const json& j) {
    if (j.contains("tract")) {
        RectilinearTract t = tract_from_json(j.at("tract"));
        return sc_tract_model(t, cplx(j.value("p", to_double(t.min_x()) + 1.0), 0.0), j.value("tol", 1e-8));
    }
    const std::string name = j.value("model", "half-strip");
    if (name == "half-strip") return half_strip_model();
    if (name == "two-tract") return two_tract_model();
    auto colon = name.find(':');
    if (colon != std::string::npos) {
        const double lambda = std::stod(name.substr(colon + 1));
        if (name.substr(0, colon) == "sine") return lambda_sin_model(lambda);
        if (name.substr(0, colon) == "exp") return lambda_exp_model(lambda);
    }
    throw InputError("unknown model \"" + name + "\"");
}

int cmd_trace(const RunConfig& rc) {
    const json input = read_json(rc.config);
    auto model = model_from_json(input);
    const std::size_t n = input.value("iterations", std::size_t{10});
    std::ostringstream csv;
    csv << "point,n,re,im,tract,m\n";
    csv.precision(12);
    std::size_t index = 0;
    for (const auto& p : input.value("points", json::array())) {
        const cplx z0(p.at(0).get<double>(), p.at(1).get<double>());
        OrbitResult o;
        try {
            o = orbit(*model, z0, n);
        } catch (const DomainError& e) {
            throw InputError("point " + std::to_string(index) + ": " + e.what());
        }
        for (std::size_t k = 0; k < o.points.size(); ++k) {
            csv << index << ',' << k << ',' << o.points[k].real() << ',' << o.points[k].imag() << ',';
            if (k < o.address.size()) csv << o.address[k].tract << ',' << o.address[k].m;
            else csv << ',';
            csv << '\n';
        }
        ++index;
    }
    write_file(rc, "orbits.csv", csv.str());
    if (input.contains("address")) {
        const ExternalAddress s = address_from_json(input.at("address"));
        const auto cloud = continuum_depth_n(*model, s, input.value("depth", std::size_t{2}),
                                             input.value("resolution", 0.25), input.value("x_window", 12.0));
        std::ostringstream out, svg;
        write_cloud_csv(out, cloud);
        const RectilinearTract* shape = model->has_tracts() ? &model->prototypes().front().shape : nullptr;
        write_cloud_svg(svg, cloud, shape);
        write_file(rc, "cloud.csv", out.str());
        write_file(rc, "cloud.svg", svg.str());
        std::cout << "trace: " << cloud.points.size() << " cloud points\n";
    }
    std::cout << "trace: " << index << " orbits of length " << n << "\n";
    return kExitOk;
}

ContinuumApprox read_cloud_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read " + path);
    ContinuumApprox c;
    std::string line;
    std::getline(in, line);
    if (line.rfind("index,re,im", 0) != 0) throw InputError(path + ": expected a cloud CSV header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string idx, re, im, res;
        std::getline(ss, idx, ',');
        std::getline(ss, re, ',');
        std::getline(ss, im, ',');
        std::getline(ss, res, ',');
        try {
            CloudPoint p;
            p.chain = {cplx(std::stod(re), std::stod(im))};
            p.residual = res.empty() ? 0.0 : std::stod(res);
            c.points.push_back(p);
        } catch (const std::exception&) {
            throw InputError(path + ": malformed row \"" + line + "\"");
        }
    }
    return c;
}

int cmd_render(const RunConfig& rc) {
    if (rc.config.empty()) throw InputError("--config is required");
    const fs::path path(rc.config);
    const std::string name = path.stem().string() + ".svg";
    if (path.extension() == ".csv") {
        std::ostringstream svg;
        write_cloud_svg(svg, read_cloud_csv(rc.config));
        write_file(rc, name, svg.str());
    } else {
        const json input = read_json(rc.config);
        const json* tj = &input;
        if (input.contains("tract")) tj = &input.at("tract");
        if (input.contains("candidate_tract")) tj = &input.at("candidate_tract");
        RectilinearTract t = tract_from_json(*tj);
        auto report = validate_tract(t);
        if (!report.ok()) throw GeometryError("refusing to render a tract that fails validation");
        write_file(rc, name, render_tract(t));
    }
    std::cout << "render: " << (fs::path(rc.out) / name).string() << "\n";
    return kExitOk;
}

int cmd_demo(RunConfig rc) {
    const fs::path out(rc.out);
    auto strip = half_strip(Rational(4), Rational(1, 2));
    write_file(rc, "half_strip.json", pretty(json(strip)));
    write_file(rc, "half_strip.svg", render_tract(strip));

    RunConfig verify = rc;
    verify.config = (out / "half_strip.json").string();
    verify.out = (out / "verify").string();
    const int verified = cmd_verify(verify);

    json trace = {{"model", "half-strip"},
                  {"points", {{6.0, 0.0}, {5.0, 0.5}}},
                  {"iterations", 3},
                  {"address", {{"entries", {{{"tract", "T"}, {"m", 0}}}}, {"period", 1}}},
                  {"depth", 1},
                  {"resolution", 0.5}};
    write_file(rc, "trace.json", pretty(trace));
    RunConfig tr = rc;
    tr.config = (out / "trace.json").string();
    tr.out = (out / "trace").string();
    cmd_trace(tr);

    json build = {{"scheme", "single"}, {"generators", {"one_point_composant"}}, {"stages", 1}};
    write_file(rc, "build.json", pretty(build));
    RunConfig b = rc;
    b.config = (out / "build.json").string();
    b.out = (out / "build").string();
    cmd_build(b);
    return verified;
}

void add_common(CLI::App* sub, RunConfig& rc) {
    sub->add_option("--config", rc.config, "input file (JSON, or cloud CSV for render)");
    sub->add_option("--out", rc.out, "output directory");
    sub->add_option("--seed", rc.seed, "seed for sampling");
    sub->add_option("--tol", rc.tol, "conformal accuracy target");
    sub->add_option("--stages", rc.stages, "stage cap for build");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"continuum-forge: build, verify and render logarithmic tract models"};
    app.require_subcommand(1);
    RunConfig rc;
    auto* build = app.add_subcommand("build", "run a construction from a config JSON");
    auto* verify = app.add_subcommand("verify", "map a tract to the half-plane and check its invariants");
    auto* trace = app.add_subcommand("trace", "orbits and finite-depth continuum clouds of a model");
    auto* render = app.add_subcommand("render", "SVG of a tract JSON, certificate or cloud CSV");
    auto* demo = app.add_subcommand("demo", "half-strip verification, trace and a stage-1 build");
    for (auto* sub : {build, verify, trace, render, demo}) add_common(sub, rc);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInput;
    }

    try {
        if (*build) return cmd_build(rc);
        if (*verify) return cmd_verify(rc);
        if (*trace) return cmd_trace(rc);
        if (*render) return cmd_render(rc);
        return cmd_demo(rc);
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInput;
    } catch (const GeometryError& e) {
        std::cerr << "geometry error: " << e.what() << "\n";
        return kExitInput;
    } catch (const json::exception& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailed;
    }
}
