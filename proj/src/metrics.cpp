#include "gms/metrics.hpp"

#include <algorithm>
#include <future>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "gms/error.hpp"

namespace gms {

namespace {

void require_samples(std::span<const Configuration> samples) {
    if (samples.empty()) throw InvalidInput("metric needs at least one sample");
}

}  // namespace

double accuracy(std::span<const Configuration> samples, CapacityClass target, const SkillProfile& skills) {
    require_samples(samples);
    std::size_t hits = 0;
    for (const auto& s : samples) hits += capacity_class(s, skills) == target ? 1 : 0;
    return 100.0 * static_cast<double>(hits) / static_cast<double>(samples.size());
}

double mse(std::span<const Configuration> samples, int target, const SkillProfile& skills) {
    require_samples(samples);
    double total = 0.0;
    for (const auto& s : samples) {
        const double d = capacity(s, skills) - target;
        total += d * d;
    }
    return total / static_cast<double>(samples.size());
}

DuplicateIndex::DuplicateIndex(std::span<const DaydreamRecord> records) {
    for (const auto& r : records) seen_.insert(r.config);
}

double duplication_rate(std::span<const Configuration> samples, const DuplicateIndex& index) {
    if (samples.empty()) return 0.0;
    std::size_t dup = 0;
    for (const auto& s : samples) dup += index.contains(s) ? 1 : 0;
    return 1000.0 * static_cast<double>(dup) / static_cast<double>(samples.size());
}

double frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double ridge) {
    if (a.rows() < 2 || b.rows() < 2) throw InvalidInput("Frechet distance needs at least two samples per set");
    if (a.cols() != b.cols()) throw InvalidInput("feature dimensions differ");
    auto moments = [ridge](const Eigen::MatrixXd& x, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
        mu = x.colwise().mean().transpose();
        Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
        cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
        cov.diagonal().array() += ridge;
    };
    Eigen::VectorXd mu1, mu2;
    Eigen::MatrixXd s1, s2;
    moments(a, mu1, s1);
    moments(b, mu2, s2);

    // Tr((S1 S2)^1/2) = Tr((R S2 R)^1/2) with R = S1^1/2; R S2 R is symmetric.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e1(s1);
    Eigen::VectorXd root = e1.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    Eigen::MatrixXd r = e1.eigenvectors() * root.asDiagonal() * e1.eigenvectors().transpose();
    Eigen::MatrixXd m = r * s2 * r;
    m = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e2(m, Eigen::EigenvaluesOnly);
    const double tr_sqrt = e2.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    const double value = (mu1 - mu2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
    return std::max(0.0, value);
}

double fid(std::span<const Configuration> samples, std::span<const Configuration> reference, const GridCodec& codec) {
    auto features = [&](std::span<const Configuration> set) {
        Eigen::MatrixXd out(static_cast<Eigen::Index>(set.size()), codec.types() * codec.stations());
        for (std::size_t r = 0; r < set.size(); ++r) {
            const auto& c = set[r];
            if (c.types() != codec.types() || c.stations() != codec.stations()) {
                throw InvalidInput("configuration shape does not match the codec");
            }
            for (int k = 0; k < codec.types() * codec.stations(); ++k) {
                out(static_cast<Eigen::Index>(r), k) = codec.encode_count(c.counts()[static_cast<std::size_t>(k)]);
            }
        }
        return out;
    };
    return frechet_distance(features(samples), features(reference));
}

double EvalReport::mean_accuracy() const {
    if (rows.empty()) return 0.0;
    double total = 0.0;
    for (const auto& r : rows) total += r.accu_percent;
    return total / static_cast<double>(rows.size());
}

std::vector<CapacityClass> EvalOptions::default_eval_classes() {
    std::vector<CapacityClass> out;
    for (const auto& c : CapacityClass::all()) {
        if (c.value() != 210) out.push_back(c);
    }
    return out;
}

EvalReport evaluate(const DiffusionModel& model, const DaydreamDataset& dataset, const EvalOptions& options) {
    if (options.samples_per_class < 1) throw InvalidInput("samples per class must be >= 1");
    if (options.classes.empty()) throw InvalidInput("no classes to evaluate");
    if (dataset.records.size() < 2) throw InvalidInput("reference dataset needs at least two records");
    const DuplicateIndex index(dataset.records);
    std::vector<Configuration> everything;
    everything.reserve(dataset.records.size());
    for (const auto& r : dataset.records) everything.push_back(r.config);

    auto score = [&](CapacityClass c) {
        SampleRequest req;
        req.capacity = c;
        req.w = options.w;
        req.count = options.samples_per_class;
        req.seed = derive_seed(options.seed, static_cast<std::uint64_t>(c.value()));
        const auto configs = sample(model, req).configs;

        std::vector<Configuration> same;
        for (const auto& r : dataset.records) {
            if (r.capacity_class == c) same.push_back(r.config);
        }
        EvalRow row;
        row.capacity = c.value();
        row.accu_percent = accuracy(configs, c, options.skills);
        row.mse = mse(configs, c.value(), options.skills);
        row.dr_permille = duplication_rate(configs, index);
        row.fid = configs.size() < 2 ? 0.0 : fid(configs, same.size() >= 2 ? same : everything, model.codec);
        return row;
    };

    EvalReport report;
    report.samples_per_class = options.samples_per_class;
    report.guided = options.w > 0.0;
    report.w = options.w;
    if (options.jobs <= 1) {
        for (const auto& c : options.classes) report.rows.push_back(score(c));
        return report;
    }
    std::vector<std::future<EvalRow>> pending;
    std::size_t next = 0;
    while (next < options.classes.size() || !pending.empty()) {
        while (next < options.classes.size() && pending.size() < static_cast<std::size_t>(options.jobs)) {
            pending.push_back(std::async(std::launch::async, score, options.classes[next++]));
        }
        report.rows.push_back(pending.front().get());
        pending.erase(pending.begin());
    }
    return report;
}

std::string eval_csv(std::span<const EvalReport> reports) {
    std::ostringstream out;
    out.precision(6);
    std::vector<int> columns;
    bool first = true;
    for (const auto& rep : reports) {
        std::ostringstream label;
        if (rep.guided) label << "guided(w=" << rep.w << ")";
        else label << "unguided";
        const std::string block = label.str();
        // One header while blocks share their class columns.
        std::vector<int> these;
        for (const auto& r : rep.rows) these.push_back(r.capacity);
        if (first || these != columns) {
            out << "block,metric";
            for (int c : these) out << ',' << c;
            out << '\n';
        }
        columns = std::move(these);
        first = false;
        auto line = [&](const char* name, auto field) {
            out << block << ',' << name;
            for (const auto& r : rep.rows) out << ',' << field(r);
            out << '\n';
        };
        line("accu_percent", [](const EvalRow& r) { return r.accu_percent; });
        line("mse", [](const EvalRow& r) { return r.mse; });
        line("dr_permille", [](const EvalRow& r) { return r.dr_permille; });
        line("fid", [](const EvalRow& r) { return r.fid; });
    }
    return out.str();
}

nlohmann::json eval_json(const EvalReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) {
        rows.push_back({{"class", r.capacity},
                        {"accu_percent", r.accu_percent},
                        {"mse", r.mse},
                        {"dr_permille", r.dr_permille},
                        {"fid", r.fid}});
    }
    return {{"guided", report.guided},
            {"w", report.w},
            {"samples_per_class", report.samples_per_class},
            {"mean_accu_percent", report.mean_accuracy()},
            {"rows", std::move(rows)}};
}

}  // namespace gms
