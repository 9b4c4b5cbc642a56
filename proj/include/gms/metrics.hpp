#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "gms/daydream.hpp"
#include "gms/diffusion.hpp"
#include "gms/domain.hpp"

namespace gms {

/// Percentage of samples whose capacity class equals `target`.
double accuracy(std::span<const Configuration> samples, CapacityClass target, const SkillProfile& skills);

/// Mean of (capacity(sample) - target)^2 in (parts/hour)^2.
double mse(std::span<const Configuration> samples, int target, const SkillProfile& skills);

/// Exact-match lookup over the configurations of a dataset.
class DuplicateIndex {
public:
    DuplicateIndex() = default;
    explicit DuplicateIndex(std::span<const DaydreamRecord> records);

    void insert(const Configuration& config) { seen_.insert(config); }
    bool contains(const Configuration& config) const { return seen_.count(config) != 0; }
    std::size_t size() const noexcept { return seen_.size(); }

private:
    std::unordered_set<Configuration, ConfigurationHash> seen_;
};

/// Per-mille of samples found verbatim in the index.
double duplication_rate(std::span<const Configuration> samples, const DuplicateIndex& index);

/// Frechet distance between Gaussians fitted to the rows of `a` and `b`.
/// The matrix square root uses a symmetric eigendecomposition with negative
/// eigenvalues clipped; `ridge` is added to both covariance diagonals.
double frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double ridge = 1e-6);

/// FID with the identity feature map on the codec encoding of each
/// configuration (the active types x stations block).
double fid(std::span<const Configuration> samples, std::span<const Configuration> reference,
           const GridCodec& codec = GridCodec());

struct EvalRow {
    int capacity = 0;
    double accu_percent = 0.0;
    double mse = 0.0;
    double dr_permille = 0.0;
    double fid = 0.0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    int samples_per_class = 0;
    bool guided = false;
    double w = 0.0;

    double mean_accuracy() const;
};

struct EvalOptions {
    /// Defaults to ten reporting columns: 0..300 without 210.
    std::vector<CapacityClass> classes = default_eval_classes();
    int samples_per_class = 100;
    double w = 2.0;
    SkillProfile skills = SkillProfile::nominal();
    std::uint64_t seed = 0;
    int jobs = 1;

    static std::vector<CapacityClass> default_eval_classes();
};

/// Samples every class and scores it against the dataset. FID compares with
/// the training records of the same class, or all records when the class
/// holds fewer than two.
EvalReport evaluate(const DiffusionModel& model, const DaydreamDataset& dataset, const EvalOptions& options);

/// Rows are metrics, columns are classes; one block per report.
std::string eval_csv(std::span<const EvalReport> reports);
nlohmann::json eval_json(const EvalReport& report);

}  // namespace gms
