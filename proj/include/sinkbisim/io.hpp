#pragma once

// Serialization: MDPs and flat run configs as JSON, per-step and sharpness
// records as RFC-4180 CSV, multi-seed mean/stderr reports, run manifests.

#include "sinkbisim/api.hpp"
#include "sinkbisim/envgen.hpp"
#include "sinkbisim/measures.hpp"
#include "sinkbisim/sharpness.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sinkbisim {

using Json = nlohmann::json;

inline constexpr const char* kStepCsvSchema = "sinkbisim-steps/1";
inline constexpr const char* kSharpnessCsvSchema = "sinkbisim-sharpness/1";
inline constexpr const char* kMdpFormat = "sinkbisim-mdp";

/// Shortest decimal that reads back to the same double (%.17g); "inf", "-inf", "nan" otherwise.
inline std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline double parse_double(const std::string& s) {
    if (s == "nan" || s == "NaN" || s.empty()) return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf" || s == "Infinity") return std::numeric_limits<double>::infinity();
    if (s == "-inf" || s == "-Infinity") return -std::numeric_limits<double>::infinity();
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("not a number: " + s);
    return v;
}

// ---------------------------------------------------------------- MDP JSON

/// Transitions are stored sparsely as [[target, prob], ...] per (action, state).
inline Json mdp_to_json(const FiniteMdp& mdp, const std::vector<std::size_t>& ec_labels = {},
                        const std::string& family = "", std::uint64_t seed = 0) {
    Json j;
    j["format"] = kMdpFormat;
    j["version"] = 1;
    j["num_states"] = mdp.num_states();
    j["num_actions"] = mdp.num_actions();
    j["gamma"] = mdp.gamma();
    Json rewards = Json::array();
    for (Eigen::Index s = 0; s < mdp.rewards().rows(); ++s) {
        Json row = Json::array();
        for (Eigen::Index a = 0; a < mdp.rewards().cols(); ++a) row.push_back(mdp.rewards()(s, a));
        rewards.push_back(std::move(row));
    }
    j["rewards"] = std::move(rewards);
    Json trans = Json::array();
    for (const auto& p : mdp.transitions()) {
        Json act = Json::array();
        for (Eigen::Index s = 0; s < p.rows(); ++s) {
            Json row = Json::array();
            for (Eigen::Index t = 0; t < p.cols(); ++t) {
                if (p(s, t) != 0.0) row.push_back(Json::array({t, p(s, t)}));
            }
            act.push_back(std::move(row));
        }
        trans.push_back(std::move(act));
    }
    j["transitions"] = std::move(trans);
    if (!ec_labels.empty()) j["ec_labels"] = ec_labels;
    if (!family.empty()) j["family"] = family;
    j["seed"] = seed;
    return j;
}

inline Json mdp_to_json(const GeneratedMdp& g) { return mdp_to_json(g.mdp, g.ec_labels, g.family, g.seed); }

inline GeneratedMdp mdp_from_json(const Json& j) {
    detail::require(j.value("format", "") == kMdpFormat, "mdp_from_json: not a sinkbisim MDP document");
    const auto ns = j.at("num_states").get<std::size_t>();
    const auto na = j.at("num_actions").get<std::size_t>();
    const auto n = static_cast<Eigen::Index>(ns);
    const auto& jr = j.at("rewards");
    detail::require(jr.size() == ns, "mdp_from_json: rewards must have one row per state");
    Matrix r(n, static_cast<Eigen::Index>(na));
    for (std::size_t s = 0; s < ns; ++s) {
        detail::require(jr[s].size() == na, "mdp_from_json: reward row has wrong length");
        for (std::size_t a = 0; a < na; ++a) r(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) = jr[s][a];
    }
    const auto& jt = j.at("transitions");
    detail::require(jt.size() == na, "mdp_from_json: transitions must have one block per action");
    std::vector<Matrix> p(na, Matrix::Zero(n, n));
    for (std::size_t a = 0; a < na; ++a) {
        detail::require(jt[a].size() == ns, "mdp_from_json: transition block has wrong length");
        for (std::size_t s = 0; s < ns; ++s) {
            for (const auto& e : jt[a][s]) {
                const auto t = e.at(0).get<std::size_t>();
                detail::require(t < ns, "mdp_from_json: transition target out of range");
                p[a](static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)) = e.at(1).get<double>();
            }
        }
    }
    GeneratedMdp g{FiniteMdp(std::move(p), std::move(r), j.at("gamma").get<double>()), {}, 0,
                   j.value("family", std::string{}), j.value("seed", std::uint64_t{0})};
    if (j.contains("ec_labels")) {
        g.ec_labels = j.at("ec_labels").get<std::vector<std::size_t>>();
        detail::require(g.ec_labels.size() == ns, "mdp_from_json: ec_labels must have one entry per state");
        g.num_classes = g.ec_labels.empty() ? 0 : *std::max_element(g.ec_labels.begin(), g.ec_labels.end()) + 1;
    }
    return g;
}

inline void save_mdp(const std::string& path, const GeneratedMdp& g) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << mdp_to_json(g).dump() << '\n';
}

inline GeneratedMdp load_mdp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    return mdp_from_json(Json::parse(in));
}

// ------------------------------------------------------------- config JSON

namespace detail {

inline std::string alpha_mode_name(AlphaMode m) {
    switch (m) {
        case AlphaMode::naive: return "naive";
        case AlphaMode::fixed: return "fixed";
        case AlphaMode::decay: return "decay";
    }
    return "fixed";
}

inline AlphaMode parse_alpha_mode(const std::string& s) {
    if (s == "naive") return AlphaMode::naive;
    if (s == "fixed") return AlphaMode::fixed;
    if (s == "decay") return AlphaMode::decay;
    throw std::invalid_argument("unknown alpha_mode: " + s);
}

inline std::string sinkhorn_mode_name(SinkhornOptions::Mode m) {
    switch (m) {
        case SinkhornOptions::Mode::automatic: return "auto";
        case SinkhornOptions::Mode::scaling: return "scaling";
        case SinkhornOptions::Mode::log_domain: return "log";
    }
    return "auto";
}

inline SinkhornOptions::Mode parse_sinkhorn_mode(const std::string& s) {
    if (s == "auto") return SinkhornOptions::Mode::automatic;
    if (s == "scaling") return SinkhornOptions::Mode::scaling;
    if (s == "log") return SinkhornOptions::Mode::log_domain;
    throw std::invalid_argument("unknown sinkhorn_mode: " + s);
}

inline Json number_or_inf(double x) { return std::isinf(x) ? Json("inf") : Json(x); }

inline double read_number_or_inf(const Json& v, const std::string& key) {
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "inf" || s == "infinity") return kInfiniteLambda;
        throw std::invalid_argument("config key " + key + ": expected a number or \"inf\"");
    }
    if (!v.is_number()) throw std::invalid_argument("config key " + key + ": expected a number");
    return v.get<double>();
}

}  // namespace detail

/// Flat key/value snapshot of every ApiConfig field.
inline Json config_to_json(const ApiConfig& c) {
    Json j;
    j["family"] = family_name(c.env.family);
    j["num_states"] = c.env.num_states;
    j["num_classes"] = c.env.num_classes;
    j["num_actions"] = c.env.num_actions;
    j["gamma"] = c.env.gamma;
    j["perturbation"] = c.env.perturbation;
    j["reward_mapping"] = c.env.mapping == DenseRewardMapping::shifted ? "shifted" : "aligned";
    j["c_R"] = c.bisim.c_R;
    j["c_T"] = c.bisim.c_T;
    j["p"] = c.bisim.p;
    j["lambda"] = detail::number_or_inf(c.bisim.lambda);
    j["epsilon"] = c.epsilon;
    j["n"] = c.n;
    j["early_tol"] = c.early_tol;
    j["alpha_mode"] = detail::alpha_mode_name(c.alpha.mode);
    j["alpha"] = c.alpha.alpha;
    j["alpha_min"] = c.alpha.alpha_min;
    j["alpha_power"] = c.alpha.power;
    j["partition"] = c.partition == PartitionMode::epsilon ? "epsilon" : "pam";
    j["pam_k"] = c.pam_k;
    j["delta_lo"] = c.delta_lo;
    j["delta_hi"] = c.delta_hi;
    j["num_steps"] = c.num_steps;
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["warm_potentials"] = c.warm_potentials;
    j["fallback_to_product"] = c.fallback_to_product;
    j["nmi_every"] = c.nmi_every;
    j["shadow_cold"] = c.shadow_cold;
    j["sinkhorn_tol"] = c.sinkhorn.tol;
    j["sinkhorn_max_iters"] = c.sinkhorn.max_iters;
    j["sinkhorn_mode"] = detail::sinkhorn_mode_name(c.sinkhorn.mode);
    return j;
}

/// Reads a flat config; absent keys keep their defaults, unknown keys are an
/// error. When "gamma" is given without "c_T", c_T follows gamma.
inline ApiConfig config_from_json(const Json& j) {
    detail::require(j.is_object(), "config must be a JSON object");
    ApiConfig c;
    std::set<std::string> known;
    auto get = [&](const char* key, auto& dst) {
        known.insert(key);
        if (!j.contains(key)) return;
        try {
            j.at(key).get_to(dst);
        } catch (const nlohmann::json::exception&) {
            throw std::invalid_argument(std::string("config key ") + key + ": wrong type");
        }
    };
    std::string family = family_name(c.env.family);
    std::string mapping = "shifted";
    std::string alpha_mode = detail::alpha_mode_name(c.alpha.mode);
    std::string partition = "epsilon";
    std::string smode = detail::sinkhorn_mode_name(c.sinkhorn.mode);
    get("family", family);
    get("num_states", c.env.num_states);
    get("num_classes", c.env.num_classes);
    get("num_actions", c.env.num_actions);
    get("gamma", c.env.gamma);
    get("perturbation", c.env.perturbation);
    get("reward_mapping", mapping);
    get("c_R", c.bisim.c_R);
    c.bisim.c_T = c.env.gamma;
    get("c_T", c.bisim.c_T);
    get("p", c.bisim.p);
    known.insert("lambda");
    if (j.contains("lambda")) c.bisim.lambda = detail::read_number_or_inf(j.at("lambda"), "lambda");
    get("epsilon", c.epsilon);
    get("n", c.n);
    get("early_tol", c.early_tol);
    get("alpha_mode", alpha_mode);
    get("alpha", c.alpha.alpha);
    get("alpha_min", c.alpha.alpha_min);
    get("alpha_power", c.alpha.power);
    get("partition", partition);
    get("pam_k", c.pam_k);
    get("delta_lo", c.delta_lo);
    get("delta_hi", c.delta_hi);
    get("num_steps", c.num_steps);
    get("seed", c.seed);
    get("threads", c.threads);
    get("warm_potentials", c.warm_potentials);
    get("fallback_to_product", c.fallback_to_product);
    get("nmi_every", c.nmi_every);
    get("shadow_cold", c.shadow_cold);
    get("sinkhorn_tol", c.sinkhorn.tol);
    get("sinkhorn_max_iters", c.sinkhorn.max_iters);
    get("sinkhorn_mode", smode);
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) throw std::invalid_argument("unknown config key: " + key);
    }
    c.env.family = parse_family(family);
    if (mapping == "shifted") {
        c.env.mapping = DenseRewardMapping::shifted;
    } else if (mapping == "aligned") {
        c.env.mapping = DenseRewardMapping::aligned;
    } else {
        throw std::invalid_argument("unknown reward_mapping: " + mapping);
    }
    c.alpha.mode = detail::parse_alpha_mode(alpha_mode);
    if (partition == "epsilon") {
        c.partition = PartitionMode::epsilon;
    } else if (partition == "pam") {
        c.partition = PartitionMode::pam;
    } else {
        throw std::invalid_argument("unknown partition: " + partition);
    }
    c.sinkhorn.mode = detail::parse_sinkhorn_mode(smode);
    c.validate();
    return c;
}

inline ApiConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    return config_from_json(Json::parse(in));
}

// --------------------------------------------------------------------- CSV

using CsvRow = std::vector<std::string>;

inline std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char ch : field) {
        if (ch == '"') out += '"';
        out += ch;
    }
    out += '"';
    return out;
}

inline void write_csv_row(std::ostream& out, const CsvRow& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i > 0) out << ',';
        out << csv_escape(row[i]);
    }
    out << "\r\n";
}

/// RFC-4180 reader: quoted fields, doubled quotes, CRLF or LF line ends.
inline std::vector<CsvRow> read_csv(std::istream& in) {
    std::vector<CsvRow> rows;
    CsvRow row;
    std::string field;
    bool quoted = false;
    bool any = false;
    char ch = 0;
    auto end_row = [&] {
        row.push_back(std::move(field));
        field.clear();
        rows.push_back(std::move(row));
        row.clear();
        any = false;
    };
    while (in.get(ch)) {
        if (quoted) {
            if (ch == '"') {
                if (in.peek() == '"') {
                    in.get(ch);
                    field += '"';
                } else {
                    quoted = false;
                }
            } else {
                field += ch;
            }
            continue;
        }
        if (ch == '"') {
            quoted = true;
            any = true;
        } else if (ch == ',') {
            row.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (ch == '\r') {
            if (in.peek() == '\n') in.get(ch);
            end_row();
        } else if (ch == '\n') {
            end_row();
        } else {
            field += ch;
            any = true;
        }
    }
    if (quoted) throw std::invalid_argument("read_csv: unterminated quoted field");
    if (any || !row.empty()) end_row();
    return rows;
}

/// Header plus data rows, with numeric access by column name.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<CsvRow> rows;

    [[nodiscard]] std::size_t column(const std::string& name) const {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw std::invalid_argument("missing CSV column: " + name);
        return static_cast<std::size_t>(it - header.begin());
    }

    [[nodiscard]] std::vector<double> numbers(const std::string& name) const {
        const std::size_t c = column(name);
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(parse_double(r.at(c)));
        return out;
    }
};

inline CsvTable read_csv_table(std::istream& in) {
    auto rows = read_csv(in);
    detail::require(!rows.empty(), "CSV has no header row");
    CsvTable t;
    t.header = std::move(rows.front());
    for (std::size_t i = 1; i < rows.size(); ++i) {
        detail::require(rows[i].size() == t.header.size(), "CSV row " + std::to_string(i) + " has wrong field count");
        t.rows.push_back(std::move(rows[i]));
    }
    return t;
}

inline CsvTable read_csv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    return read_csv_table(in);
}

/// The first ten columns are the core schema; the rest are diagnostics.
inline const std::vector<std::string>& step_csv_header() {
    static const std::vector<std::string> h{
        "step",     "seed",           "gap_vstar",        "metric_value_gap",  "num_partitions",
        "alpha_k",  "delta_achieved", "sinkhorn_iters",   "wall_ms",           "metric_sup_change",
        "delta_pe", "partition_radius", "metric_iterations", "failed_pairs",   "calibrated",
        "nmi"};
    return h;
}

inline CsvRow step_csv_row(const StepRecord& r) {
    return {std::to_string(r.step),       std::to_string(r.seed),           format_double(r.gap_vstar),
            format_double(r.metric_value_gap), std::to_string(r.num_partitions), format_double(r.alpha_k),
            format_double(r.delta_achieved),   std::to_string(r.sinkhorn_iters), format_double(r.wall_ms),
            format_double(r.metric_sup_change), format_double(r.delta_pe),     format_double(r.partition_radius),
            std::to_string(r.metric_iterations), std::to_string(r.failed_pairs), r.calibrated ? "1" : "0",
            format_double(r.nmi)};
}

inline void write_step_csv(std::ostream& out, const std::vector<StepRecord>& steps, bool header = true) {
    if (header) write_csv_row(out, step_csv_header());
    for (const auto& r : steps) write_csv_row(out, step_csv_row(r));
}

inline const std::vector<std::string>& sharpness_csv_header() {
    static const std::vector<std::string> h{"dim",       "bucket",     "h_mu1",     "h_mu2",
                                            "lambda",    "lambda_ref", "w_lambda",  "w_ref",
                                            "rel_error", "ref_violation", "ref_converged", "mu1_index",
                                            "mu2_index", "seed"};
    return h;
}

inline void write_sharpness_csv(std::ostream& out, const std::vector<SharpnessRecord>& recs) {
    write_csv_row(out, sharpness_csv_header());
    for (const auto& r : recs) {
        write_csv_row(out, {std::to_string(r.dim), format_double(r.bucket), format_double(r.h_mu1),
                            format_double(r.h_mu2), format_double(r.lambda), format_double(r.lambda_ref),
                            format_double(r.w_lambda), format_double(r.w_ref), format_double(r.rel_error),
                            format_double(r.ref_violation), r.ref_converged ? "1" : "0", std::to_string(r.mu1_index),
                            std::to_string(r.mu2_index), std::to_string(r.seed)});
    }
}

// ------------------------------------------------------------------ report

/// Per-step mean and standard error (sd / sqrt(n), sd with n - 1) of every
/// column except step and seed, over all rows sharing a step. NaN cells are
/// skipped; a column with no finite values reports NaN.
struct StepReport {
    std::vector<std::string> columns;
    std::vector<std::size_t> steps;
    std::vector<std::size_t> counts;             ///< rows contributing per step
    std::vector<std::vector<double>> mean;       ///< [step][column]
    std::vector<std::vector<double>> stderr_;    ///< [step][column]
};

inline StepReport aggregate_steps(const std::vector<CsvTable>& tables) {
    detail::require(!tables.empty(), "aggregate_steps: no input tables");
    StepReport rep;
    for (const auto& name : tables.front().header) {
        if (name != "step" && name != "seed") rep.columns.push_back(name);
    }
    std::map<std::size_t, std::vector<std::vector<double>>> cells;  // step -> column -> values
    std::map<std::size_t, std::size_t> counts;
    for (const auto& t : tables) {
        detail::require(t.header == tables.front().header, "aggregate_steps: CSV headers differ");
        const std::size_t sc = t.column("step");
        std::vector<std::size_t> idx;
        for (const auto& name : rep.columns) idx.push_back(t.column(name));
        for (const auto& row : t.rows) {
            const auto step = static_cast<std::size_t>(std::stoull(row[sc]));
            auto& cols = cells[step];
            cols.resize(rep.columns.size());
            ++counts[step];
            for (std::size_t c = 0; c < idx.size(); ++c) {
                const double v = parse_double(row[idx[c]]);
                if (!std::isnan(v)) cols[c].push_back(v);
            }
        }
    }
    for (const auto& [step, cols] : cells) {
        rep.steps.push_back(step);
        rep.counts.push_back(counts[step]);
        std::vector<double> m, s;
        for (const auto& v : cols) {
            m.push_back(mean(v));
            s.push_back(stderr_of_mean(v));
        }
        rep.mean.push_back(std::move(m));
        rep.stderr_.push_back(std::move(s));
    }
    return rep;
}

inline void write_report_csv(std::ostream& out, const StepReport& rep) {
    CsvRow header{"step", "n"};
    for (const auto& c : rep.columns) {
        header.push_back(c + "_mean");
        header.push_back(c + "_stderr");
    }
    write_csv_row(out, header);
    for (std::size_t i = 0; i < rep.steps.size(); ++i) {
        CsvRow row{std::to_string(rep.steps[i]), std::to_string(rep.counts[i])};
        for (std::size_t c = 0; c < rep.columns.size(); ++c) {
            row.push_back(format_double(rep.mean[i][c]));
            row.push_back(format_double(rep.stderr_[i][c]));
        }
        write_csv_row(out, row);
    }
}

// ---------------------------------------------------------------- manifest

struct RunManifest {
    std::string experiment_id;
    Json config;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> outputs;
    std::string started_at;
    std::string finished_at;
    Json extra = Json::object();

    [[nodiscard]] Json to_json() const {
        Json j;
        j["experiment_id"] = experiment_id;
        j["config"] = config;
        j["seeds"] = seeds;
        j["outputs"] = outputs;
        j["started_at"] = started_at;
        j["finished_at"] = finished_at;
        j["csv_schema"] = kStepCsvSchema;
        j["nmi_normalization"] = "arithmetic";
        for (const auto& [k, v] : extra.items()) j[k] = v;
        return j;
    }
};

/// Seed lists: "7", "0..9" (inclusive) or "1,4,9".
inline std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> out;
    const auto dots = text.find("..");
    if (dots != std::string::npos) {
        const auto a = std::stoull(text.substr(0, dots));
        const auto b = std::stoull(text.substr(dots + 2));
        detail::require(a <= b, "seed range must be ascending");
        for (auto s = a; s <= b; ++s) out.push_back(s);
        return out;
    }
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        std::size_t used = 0;
        out.push_back(std::stoull(part, &used));
        detail::require(used == part.size(), "bad seed: " + part);
    }
    detail::require(!out.empty(), "empty seed list");
    return out;
}

}  // namespace sinkbisim
