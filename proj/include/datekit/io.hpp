#pragma once

// File formats: JSON datasets (optionally headerless CSV), precision
// estimates, simulation reports and phase-curve CSV. Doubles are written in
// the shortest form that parses back to the same value.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "datekit/cov_models.hpp"
#include "datekit/date.hpp"
#include "datekit/evaluation.hpp"
#include "datekit/precision.hpp"
#include "datekit/simulation.hpp"

namespace datekit::io {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    while (first < last && (*first == ' ' || *first == '\t')) ++first;
    while (last > first && (last[-1] == ' ' || last[-1] == '\t' || last[-1] == '\r')) --last;
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last) throw IoError("cannot parse number '" + s + "'");
    return v;
}

/// Writes to a sibling temporary file and renames it over `path`.
inline void write_atomic(const std::filesystem::path& path, const std::string& contents) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out << contents;
        out.flush();
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline Json parse_json(const std::string& text, const std::string& what) {
    try {
        return Json::parse(text);
    } catch (const Json::exception& e) {
        throw IoError(what + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Matrices

inline Json row_major(const Matrix& m) {
    Json arr = Json::array();
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) arr.push_back(m(i, j));
    return arr;
}

inline Matrix matrix_from_row_major(const Json& arr, Index rows, Index cols, const std::string& what) {
    if (!arr.is_array() || static_cast<Index>(arr.size()) != rows * cols)
        throw IoError(what + ": expected " + std::to_string(rows * cols) + " values");
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = arr[static_cast<std::size_t>(i * cols + j)].get<double>();
    return m;
}

inline Json vector_json(const Vector& v) {
    Json arr = Json::array();
    for (Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

inline Vector vector_from_json(const Json& arr, Index size, const std::string& what) {
    if (!arr.is_array() || static_cast<Index>(arr.size()) != size)
        throw IoError(what + ": expected " + std::to_string(size) + " values");
    Vector v(size);
    for (Index i = 0; i < size; ++i) v(i) = arr[static_cast<std::size_t>(i)].get<double>();
    return v;
}

inline std::string matrix_csv(const Matrix& m) {
    std::string out;
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            if (j > 0) out += ',';
            out += format_double(m(i, j));
        }
        out += '\n';
    }
    return out;
}

inline Matrix matrix_from_csv(const std::string& text, const std::string& what) {
    std::vector<std::vector<double>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) row.push_back(parse_double(cell));
        if (!rows.empty() && row.size() != rows.front().size()) throw IoError(what + ": ragged rows");
        rows.push_back(std::move(row));
    }
    const Index r = static_cast<Index>(rows.size());
    const Index c = r == 0 ? 0 : static_cast<Index>(rows.front().size());
    Matrix m(r, c);
    for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < c; ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    return m;
}

// ---------------------------------------------------------------------------
// Generation metadata

inline Json covariance_json(const CovarianceSpec& spec) {
    Json j;
    j["model"] = model_name(spec.kind);
    j["p"] = spec.p;
    if (const auto* a = std::get_if<Ar1>(&spec.kind)) j["rho"] = a->rho;
    if (const auto* b = std::get_if<BlockDiag>(&spec.kind)) {
        j["within_corr"] = b->within_corr;
        j["block_size"] = b->block_size;
    }
    if (const auto* c = std::get_if<PentaDiag>(&spec.kind)) {
        j["d1"] = c->d1;
        j["d2"] = c->d2;
    }
    if (const auto* d = std::get_if<RandomSparse>(&spec.kind)) {
        j["mag_low"] = d->mag_low;
        j["mag_high"] = d->mag_high;
    }
    return j;
}

inline CovarianceSpec covariance_from_json(const Json& j) {
    CovarianceSpec spec;
    spec.p = j.at("p").get<Index>();
    const auto model = j.at("model").get<std::string>();
    if (model == "ar1") {
        spec.kind = Ar1{j.at("rho").get<double>()};
    } else if (model == "block") {
        spec.kind = BlockDiag{j.at("within_corr").get<double>(), j.at("block_size").get<Index>()};
    } else if (model == "penta") {
        spec.kind = PentaDiag{j.at("d1").get<double>(), j.at("d2").get<double>()};
    } else if (model == "sparse") {
        spec.kind = RandomSparse{j.at("mag_low").get<double>(), j.at("mag_high").get<double>()};
    } else {
        throw IoError("unknown covariance model '" + model + "'");
    }
    return spec;
}

inline Json signal_json(const SignalSpec& s) {
    return Json{{"beta", s.beta}, {"r", s.r}, {"mag_low", s.mag_low}, {"mag_high", s.mag_high}};
}

inline SignalSpec signal_from_json(const Json& j) {
    return SignalSpec{j.at("beta").get<double>(), j.at("r").get<double>(), j.at("mag_low").get<double>(),
                      j.at("mag_high").get<double>()};
}

inline Json meta_json(const GenerationRecord& meta) {
    return Json{{"covariance", covariance_json(meta.cov)}, {"signal", signal_json(meta.signal)}, {"seed", meta.seed}};
}

inline GenerationRecord meta_from_json(const Json& j) {
    return GenerationRecord{covariance_from_json(j.at("covariance")), signal_from_json(j.at("signal")),
                            j.at("seed").get<std::uint64_t>()};
}

// ---------------------------------------------------------------------------
// Datasets

inline Json dataset_json(const TwoSampleData& d) {
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["p"] = d.p();
    j["n1"] = d.n1();
    j["n2"] = d.n2();
    j["x1"] = row_major(d.x1);
    j["x2"] = row_major(d.x2);
    if (d.truth) j["truth"] = vector_json(*d.truth);
    j["meta"] = d.meta ? meta_json(*d.meta) : Json::object();
    return j;
}

inline TwoSampleData dataset_from_json(const Json& j) {
    try {
        if (j.at("schema_version").get<int>() != kSchemaVersion) throw IoError("dataset: unsupported schema_version");
        const auto p = j.at("p").get<Index>();
        const auto n1 = j.at("n1").get<Index>();
        const auto n2 = j.at("n2").get<Index>();
        TwoSampleData d;
        d.x1 = matrix_from_row_major(j.at("x1"), n1, p, "dataset x1");
        d.x2 = matrix_from_row_major(j.at("x2"), n2, p, "dataset x2");
        if (j.contains("truth") && !j["truth"].is_null()) d.truth = vector_from_json(j["truth"], p, "dataset truth");
        if (j.contains("meta") && j["meta"].contains("covariance")) d.meta = meta_from_json(j["meta"]);
        return d;
    } catch (const Json::exception& e) {
        throw IoError(std::string("dataset: ") + e.what());
    }
}

struct CsvPaths {
    std::filesystem::path x1, x2, truth;
};

/// `prefix_x1.csv`, `prefix_x2.csv`, `prefix_truth.csv`
inline CsvPaths csv_paths(const std::filesystem::path& prefix) {
    const std::string base = prefix.string();
    return {base + "_x1.csv", base + "_x2.csv", base + "_truth.csv"};
}

inline void write_dataset(const TwoSampleData& d, const std::filesystem::path& path, bool csv) {
    if (!csv) {
        write_atomic(path, dataset_json(d).dump() + "\n");
        return;
    }
    const CsvPaths paths = csv_paths(path);
    write_atomic(paths.x1, matrix_csv(d.x1));
    write_atomic(paths.x2, matrix_csv(d.x2));
    if (d.truth) write_atomic(paths.truth, matrix_csv(d.truth->transpose()));
}

inline TwoSampleData read_dataset(const std::filesystem::path& path, bool csv) {
    if (!csv) return dataset_from_json(parse_json(read_file(path), "dataset " + path.string()));
    const CsvPaths paths = csv_paths(path);
    TwoSampleData d;
    d.x1 = matrix_from_csv(read_file(paths.x1), paths.x1.string());
    d.x2 = matrix_from_csv(read_file(paths.x2), paths.x2.string());
    if (d.x1.cols() != d.x2.cols()) throw IoError("dataset csv: column counts differ");
    if (std::filesystem::exists(paths.truth)) {
        const Matrix t = matrix_from_csv(read_file(paths.truth), paths.truth.string());
        if (t.size() != d.x1.cols()) throw IoError("dataset csv: truth length differs from p");
        d.truth = Eigen::Map<const Vector>(t.data(), t.size());
    }
    return d;
}

// ---------------------------------------------------------------------------
// Precision estimates

inline Json precision_json(const PrecisionEstimate& est) {
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["p"] = est.dim();
    j["method"] = method_name(est.method);
    if (const auto* b = std::get_if<BandedCholesky>(&est.method)) j["tau"] = b->tau;
    if (const auto* t = std::get_if<ThresholdedCov>(&est.method)) j["threshold"] = t->m;
    j["repair_shift"] = est.repair_shift;
    const OmegaBounds b = omega_bounds(est.omega);
    j["omega_lower"] = b.omega_lower;
    j["omega_bar"] = b.omega_bar;
    j["omega"] = row_major(est.omega.matrix());
    return j;
}

inline PrecisionEstimate precision_from_json(const Json& j) {
    try {
        const auto p = j.at("p").get<Index>();
        SymmetricMatrix omega(matrix_from_row_major(j.at("omega"), p, p, "omega"));
        const auto method = j.at("method").get<std::string>();
        PrecisionMethod m = KnownOmega{};
        if (method == "banded") m = BandedCholesky{j.at("tau").get<Index>()};
        if (method == "threshcov") m = ThresholdedCov{j.at("threshold").get<double>()};
        return PrecisionEstimate::make(std::move(omega), m, j.value("repair_shift", 0.0));
    } catch (const Json::exception& e) {
        throw IoError(std::string("omega file: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Recovery results

inline Json tuning_json(const TuningParams& t) {
    return Json{{"beta_hat", t.beta_hat},       {"r_hat", t.r_hat},         {"omega_lower_hat", t.omega_lower_hat},
                {"lambda_cap", t.lambda_cap},   {"upsilon", t.upsilon},     {"lambda_date", t.lambda_date},
                {"delta_date", t.delta_date},   {"clamps", t.clamps}};
}

inline Json recovery_json(const RecoveryResult& r) {
    Json j;
    j["decisions"] = r.decisions;
    j["delta_date"] = r.tuning.delta_date;
    j["t_stats"] = vector_json(r.t_stats);
    j["survivors"] = r.survivors;
    j["components"] = r.components;
    j["tuning"] = tuning_json(r.tuning);
    j["flags"] = Json{{"no_exceedances", r.flags.no_exceedances},
                      {"oversize_components", r.flags.oversize_components},
                      {"ridge_repaired_components", r.flags.ridge_repaired_components}};
    return j;
}

// ---------------------------------------------------------------------------
// Simulation reports

inline Json counts_json(const RepRecord& rec) {
    Json j{{"rep", rec.rep},
           {"fp", rec.counts.fp},
           {"tp", rec.counts.tp},
           {"fn", rec.counts.fn},
           {"tn", rec.counts.tn},
           {"tp_sign_correct", rec.counts.tp_sign_correct}};
    if (!rec.ok()) j["error"] = rec.error;
    return j;
}

/// The "runtime" block (wall time, threads) is the only part that may differ
/// between runs with the same configuration and seed.
inline Json report_json(const SimulationReport& rep, const Json& config, int threads) {
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["config"] = config;
    j["seed"] = rep.seed;
    j["reps"] = rep.reps;
    Json methods = Json::array();
    for (const auto& m : rep.per_method) {
        Json per_rep = Json::array();
        for (const auto& rec : m.per_rep) per_rep.push_back(counts_json(rec));
        methods.push_back(Json{{"method", method_name(m.method)},
                               {"mfdr", m.rates.mfdr},
                               {"mfnr", m.rates.mfnr},
                               {"atp", m.rates.atp},
                               {"failures", m.failures},
                               {"per_rep", per_rep}});
    }
    j["methods"] = methods;
    j["runtime"] = Json{{"wall_time", rep.wall_time}, {"threads", threads}};
    return j;
}

/// Columns method,rep,fp,tp,fn,tn.
inline std::string report_csv(const SimulationReport& rep) {
    std::string out = "method,rep,fp,tp,fn,tn\n";
    for (const auto& m : rep.per_method) {
        for (const auto& rec : m.per_rep) {
            if (!rec.ok()) continue;
            out += method_name(m.method) + ',' + std::to_string(rec.rep) + ',' + std::to_string(rec.counts.fp) + ',' +
                   std::to_string(rec.counts.tp) + ',' + std::to_string(rec.counts.fn) + ',' +
                   std::to_string(rec.counts.tn) + '\n';
        }
    }
    return out;
}

/// Header beta,no_recovery,full_recovery,indep_no_recovery,indep_full_recovery.
inline std::string phase_csv(const PhaseCurves& c) {
    std::string out = "beta,no_recovery,full_recovery,indep_no_recovery,indep_full_recovery\n";
    for (std::size_t i = 0; i < c.beta_grid.size(); ++i) {
        out += format_double(c.beta_grid[i]) + ',' + format_double(c.no_recovery_r[i]) + ',' +
               format_double(c.full_recovery_r[i]) + ',' + format_double(c.indep_no_recovery_r[i]) + ',' +
               format_double(c.indep_full_recovery_r[i]) + '\n';
    }
    return out;
}

}  // namespace datekit::io
