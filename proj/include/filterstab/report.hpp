#pragma once

// JSON views of certificates. Field names follow the struct members.

#include <cmath>
#include <string>

#include "json.hpp"

#include "filterstab/stability.hpp"

namespace filterstab {

namespace detail {

// Non-finite values become null so that the document stays valid JSON.
inline nlohmann::json number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

}  // namespace detail

inline nlohmann::json to_json(const ContinuousCertificate& c) {
  nlohmann::json j;
  j["construction"] = c.construction;
  j["functional"] = to_string(c.kind);
  j["provenance"] = to_string(c.provenance);
  j["asymptotic"] = c.asymptotic;
  j["lambda"] = detail::number(c.lambda);
  j["lambda_P"] = detail::number(c.lambda_P);
  j["T"] = detail::number(c.T);
  j["C_lambda"] = detail::number(c.C_lambda);
  j["u"] = detail::number(c.u);
  j["rho"] = detail::number(c.rho);
  j["C_T"] = detail::number(c.C_T);
  j["e_T_sq"] = detail::number(c.e_T_sq);
  j["trace_Q"] = detail::number(c.trace_Q);
  j["trace_S"] = detail::number(c.trace_S);
  j["mse_asymptote"] = detail::number(c.mse_asymptote());
  // C_T uses the moment-index-free surrogate; the threshold is not sharp.
  j["concentration_constant"] = "n-uniform surrogate";
  nlohmann::json d = nlohmann::json::object();
  for (const auto& [k, v] : c.details) d[k] = detail::number(v);
  j["details"] = d;
  return j;
}

inline nlohmann::json to_json(const DiscreteCertificate& c) {
  nlohmann::json j;
  j["functional"] = to_string(c.kind);
  j["lambda_d"] = detail::number(c.lambda_d);
  j["lambda_d_provenance"] = to_string(c.lambda_d_provenance);
  j["lambda_df"] = detail::number(c.lambda_df);
  j["kappa"] = detail::number(c.kappa);
  j["lambda_P_pred"] = detail::number(c.lambda_P_pred);
  j["lambda_P_upd"] = detail::number(c.lambda_P_upd);
  j["trace_provenance"] = to_string(c.trace_provenance);
  j["C_f"] = detail::number(c.C_f);
  j["eta"] = detail::number(c.eta);
  j["u_d"] = detail::number(c.u_d);
  j["jf_norm"] = detail::number(c.jf_norm);
  j["mse_asymptote"] = detail::number(discrete_mse_asymptote(c));
  return j;
}

}  // namespace filterstab
