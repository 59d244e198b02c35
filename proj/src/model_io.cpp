#include "stldac/error.hpp"
#include "stldac/model.hpp"

namespace stldac {

using io::json;

json to_json(const Hyperparams& hp) {
    return json{{"T", hp.T},
                {"G", hp.G},
                {"eta", hp.eta},
                {"nu", hp.nu},
                {"alpha_prior",
                 {{"m_concentration", hp.alpha_prior.m_concentration},
                  {"c_mean", hp.alpha_prior.c_mean},
                  {"c_sd", hp.alpha_prior.c_sd}}}};
}

Hyperparams hyperparams_from_json(const json& value) {
    Hyperparams hp;
    if (!value.is_object()) throw ValidationError("hyperparams must be an object");
    hp.T = value.value("T", hp.T);
    hp.G = value.value("G", hp.G);
    hp.eta = value.value("eta", hp.eta);
    hp.nu = value.value("nu", hp.nu);
    if (value.contains("alpha_prior")) {
        const json& ap = value["alpha_prior"];
        hp.alpha_prior.m_concentration = ap.value("m_concentration", std::vector<double>{});
        hp.alpha_prior.c_mean = ap.value("c_mean", hp.alpha_prior.c_mean);
        hp.alpha_prior.c_sd = ap.value("c_sd", hp.alpha_prior.c_sd);
    }
    hp.validate();
    return hp;
}

json to_json(const ModelParams& params) {
    json out{{"dims", {{"G", params.alpha.rows()}, {"T", params.alpha.cols()}, {"V", params.beta.cols()}}},
             {"alpha", io::to_json(params.alpha)},
             {"beta", io::to_json(params.beta)},
             {"phi", params.phi}};
    io::stamp_schema(out, "stldac.model_params", kModelSchemaVersion);
    return out;
}

ModelParams model_params_from_json(const json& value) {
    io::check_schema(value, "stldac.model_params", kModelSchemaVersion);
    ModelParams p;
    p.alpha = io::matrix_from_json(value.at("alpha"));
    p.beta = io::matrix_from_json(value.at("beta"));
    p.phi = io::field<std::vector<double>>(value, "phi");
    if (p.alpha.rows() != p.phi.size() || p.alpha.cols() != p.beta.rows())
        throw CorruptFileError("model params: inconsistent dimensions");
    return p;
}

void save_params(const ModelParams& params, const std::filesystem::path& path) {
    io::write_json_file(path, to_json(params));
}

ModelParams load_params(const std::filesystem::path& path) {
    return model_params_from_json(io::read_json_file(path));
}

json to_json(const PosteriorSummary& s) {
    json out{{"doc_topic_probs", io::to_json(s.doc_topic_probs)},
             {"user_cluster_probs", io::to_json(s.user_cluster_probs)},
             {"theta_mean", io::to_json(s.theta_mean)},
             {"beta_mean", io::to_json(s.beta_mean)},
             {"alpha_mean", io::to_json(s.alpha_mean)},
             {"phi_mean", s.phi_mean}};
    io::stamp_schema(out, "stldac.posterior_summary", kModelSchemaVersion);
    return out;
}

PosteriorSummary posterior_summary_from_json(const json& value) {
    io::check_schema(value, "stldac.posterior_summary", kModelSchemaVersion);
    PosteriorSummary s;
    s.doc_topic_probs = io::matrix_from_json(value.at("doc_topic_probs"));
    s.user_cluster_probs = io::matrix_from_json(value.at("user_cluster_probs"));
    s.theta_mean = io::matrix_from_json(value.at("theta_mean"));
    s.beta_mean = io::matrix_from_json(value.at("beta_mean"));
    s.alpha_mean = io::matrix_from_json(value.at("alpha_mean"));
    s.phi_mean = io::field<std::vector<double>>(value, "phi_mean");
    return s;
}

void save_summary(const PosteriorSummary& summary, const std::filesystem::path& path) {
    io::write_json_file(path, to_json(summary));
}

PosteriorSummary load_summary(const std::filesystem::path& path) {
    return posterior_summary_from_json(io::read_json_file(path));
}

}  // namespace stldac
