#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gms/daydream.hpp"
#include "gms/diffusion.hpp"
#include "gms/inquiry.hpp"
#include "gms/metrics.hpp"

namespace py = pybind11;

namespace {

using Counts = py::array_t<int, py::array::c_style | py::array::forcecast>;

gms::Configuration to_config(const Counts& counts) {
    if (counts.ndim() != 2) throw gms::InvalidInput("counts must be a 2-D array (types x stations)");
    const auto types = static_cast<int>(counts.shape(0));
    const auto stations = static_cast<int>(counts.shape(1));
    std::vector<int> flat(counts.data(), counts.data() + counts.size());
    return gms::Configuration(types, stations, std::move(flat));
}

Counts to_array(const gms::Configuration& c) {
    Counts out({c.types(), c.stations()});
    std::copy(c.counts().begin(), c.counts().end(), out.mutable_data());
    return out;
}

gms::SkillProfile profile(const std::string& skill, int types) {
    auto level = gms::parse_skill_level(skill);
    if (!level) throw gms::InvalidInput("unknown skill level '" + skill + "'");
    return gms::SkillProfile::with_human_skill(*level, types);
}

py::dict class_dict(const gms::ConditionClass& c) {
    py::dict d;
    d["capacity"] = c.capacity ? py::cast(*c.capacity) : py::none();
    d["skill"] = c.skill ? py::cast(std::string(gms::to_string(*c.skill))) : py::none();
    d["max_machines"] = c.max_machines ? py::cast(*c.max_machines) : py::none();
    return d;
}

Counts stack(const std::vector<gms::Configuration>& configs, int types, int stations) {
    Counts out({static_cast<py::ssize_t>(configs.size()), static_cast<py::ssize_t>(types),
                static_cast<py::ssize_t>(stations)});
    int* dst = out.mutable_data();
    for (const auto& c : configs) dst = std::copy(c.counts().begin(), c.counts().end(), dst);
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Generative manufacturing configuration engine";

    // Translators run newest first, so the base class goes in first.
    py::register_exception<gms::Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<gms::InvalidInput>(m, "InvalidInput", PyExc_ValueError);
    py::register_exception<gms::IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<gms::CheckpointError>(m, "CheckpointError", PyExc_ValueError);

    m.attr("ASSET_TYPES") = gms::kAssetTypes;
    m.attr("STATIONS") = gms::kStations;
    m.attr("MAX_PER_CELL") = gms::kMaxPerCell;
    m.attr("CAPACITY_CLASSES") = [] {
        std::vector<int> v;
        for (auto c : gms::CapacityClass::all()) v.push_back(c.value());
        return v;
    }();

    m.def(
        "capacity",
        [](const Counts& counts, const std::string& skill) {
            const auto c = to_config(counts);
            return gms::capacity(c, profile(skill, c.types()));
        },
        py::arg("counts"), py::arg("skill") = "moderate", "Binned bottleneck capacity of a types x stations array.");

    m.def(
        "encode",
        [](const Counts& counts) {
            const gms::GridCodec codec;
            const auto grid = codec.encode(to_config(counts));
            py::array_t<float> out({grid.size, grid.size});
            std::copy(grid.values.begin(), grid.values.end(), out.mutable_data());
            return out;
        },
        py::arg("counts"), "Padded 16 x 16 grid in [-1, 1].");

    m.def(
        "decode",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> grid) {
            const gms::GridCodec codec;
            if (grid.ndim() != 2 || grid.shape(0) != codec.size() || grid.shape(1) != codec.size()) {
                throw gms::InvalidInput("grid must be " + std::to_string(codec.size()) + " x " +
                                        std::to_string(codec.size()));
            }
            return to_array(codec.decode(grid.data()));
        },
        py::arg("grid"));

    m.def(
        "parse_inquiry", [](const std::string& text) { return class_dict(gms::parse_inquiry(text)); },
        py::arg("text"), "Extract {capacity, skill, max_machines} from an English request.");
    m.def(
        "format_class", [](const std::string& text) { return gms::format_class(gms::parse_inquiry(text)); },
        py::arg("text"), "Canonical (capacity, skill, max_machines) string for a request.");

    m.def(
        "daydream",
        [](int runs, int generations, int population, std::uint64_t seed, const std::string& skills) {
            gms::EvolutionParams params;
            params.generations = generations;
            params.population = population;
            gms::DatasetOptions opts;
            if (skills == "nominal") {
                opts.skills = gms::SkillSampling::kNominal;
            } else if (skills != "random") {
                throw gms::InvalidInput("skills must be random or nominal");
            }
            const auto data = gms::build_dataset(runs, params, seed, opts);
            std::vector<gms::Configuration> configs;
            std::vector<int> classes;
            for (const auto& r : data.records) {
                configs.push_back(r.config);
                classes.push_back(r.capacity_class.value());
            }
            return py::make_tuple(stack(configs, data.header.types, data.header.stations), classes);
        },
        py::arg("runs"), py::arg("generations") = 25, py::arg("population") = 40, py::arg("seed") = 0,
        py::arg("skills") = "random", "Returns (counts[N, types, stations], capacity classes).");

    m.def(
        "schedule",
        [](double beta0, double betaT, int steps) {
            const auto s = gms::make_schedule(beta0, betaT, steps);
            py::dict d;
            d["betas"] = s.betas;
            d["alphas"] = s.alphas;
            d["sigmas"] = s.sigmas;
            return d;
        },
        py::arg("beta0") = 1e-4, py::arg("betaT") = 0.02, py::arg("steps") = 100);

    m.def(
        "frechet_distance",
        [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return gms::frechet_distance(a, b); },
        py::arg("a"), py::arg("b"), "Frechet distance between Gaussians fitted to the rows of a and b.");

    py::class_<gms::DiffusionModel, std::shared_ptr<gms::DiffusionModel>>(m, "Model")
        .def_static(
            "load", [](const std::string& path) { return std::make_shared<gms::DiffusionModel>(gms::load_model(path)); },
            py::arg("path"))
        .def_property_readonly("steps", [](const gms::DiffusionModel& mdl) { return mdl.schedule.steps; })
        .def(
            "sample",
            [](const gms::DiffusionModel& mdl, int capacity, int count, double w, std::uint64_t seed) {
                gms::SampleRequest req;
                req.capacity = gms::CapacityClass(capacity);
                req.count = count;
                req.w = w;
                req.seed = seed;
                gms::SampleResult result;
                {
                    py::gil_scoped_release release;
                    result = gms::sample(mdl, req);
                }
                return stack(result.configs, mdl.codec.types(), mdl.codec.stations());
            },
            py::arg("capacity"), py::arg("count") = 1, py::arg("w") = 2.0, py::arg("seed") = 0);
}
