#include "tthf/objective.hpp"

#include <cmath>

namespace tthf::objective {

void Batch::validate() const {
  const int n = size();
  if (n < 1) throw ValidationError("batch is empty");
  if (fused->val.rows() != n || enhanced->val.rows() != n) {
    throw ValidationError("batch: representation row count does not match targets");
  }
  if (fused->val.cols() != enhanced->val.cols() || fused->val.cols() != text_fine->val.cols() ||
      fused->val.cols() != text_general->val.cols()) {
    throw ValidationError("batch: embedding widths differ");
  }
  if (text_fine->val.rows() != 11 || text_general->val.rows() != 2) {
    throw ValidationError("batch: expected 11 fine-grained and 2 general prompt rows");
  }
  if (static_cast<int>(general_targets.size()) != n) {
    throw ValidationError("batch: general target count mismatch");
  }
  for (int t : fine_targets) {
    if (t < 1 || t > 11) throw ValidationError("batch: fine target out of [1,11]");
  }
  for (int t : general_targets) {
    if (t < 1 || t > 2) throw ValidationError("batch: general target out of [1,2]");
  }
}

Temperature Temperature::init(double tau) {
  if (tau <= 0.0) throw UsageError("temperature must be positive");
  Temperature t;
  ad::Matrix v(1, 1);
  v(0, 0) = std::log(tau);
  t.log_tau = ad::param(std::move(v));
  return t;
}

double Temperature::tau() const { return std::exp(log_tau->val(0, 0)); }

ad::Value Temperature::inv_tau() const { return ad::exp(ad::neg(log_tau)); }

void Temperature::clamp() {
  // 1/tau <= 100  <=>  log(tau) >= log(0.01)
  const double floor_log_tau = std::log(0.01);
  if (log_tau->val(0, 0) < floor_log_tau) log_tau->val(0, 0) = floor_log_tau;
}

namespace {

std::vector<int> to_zero_based(const std::vector<int>& targets) {
  std::vector<int> z(targets.size());
  for (size_t i = 0; i < targets.size(); ++i) z[i] = targets[i] - 1;
  return z;
}

/// logits(i, j) = <rep_i, text_j> / tau, optionally on normalized rows.
ad::Value scaled_logits(const ad::Value& reps, const ad::Value& text, const Temperature& temp,
                        const LossOptions& opt) {
  ad::Value a = reps, b = text;
  if (opt.cosine_in_loss) {
    a = ad::l2_normalize_rows(a);
    b = ad::l2_normalize_rows(b);
  }
  ad::Value logits = ad::mul_scalar(ad::matmul(a, ad::transpose(b)), temp.inv_tau());
  if (!ad::all_finite(logits->val)) throw NumericError("contrastive logits are not finite");
  return logits;
}

}  // namespace

ad::Value loss_visual_fine(const Batch& batch, const Temperature& temp, const LossOptions& opt) {
  batch.validate();
  ad::Value logits = scaled_logits(batch.fused, batch.text_fine, temp, opt);
  return ad::cross_entropy_rows(logits, to_zero_based(batch.fine_targets));
}

ad::Value loss_text_fine(const Batch& batch, const Temperature& temp, const LossOptions& opt) {
  batch.validate();
  ad::Value logits = scaled_logits(batch.fused, batch.text_fine, temp, opt);
  return ad::grouped_nce_text_axis(ad::transpose(logits), to_zero_based(batch.fine_targets));
}

std::pair<ad::Value, ad::Value> loss_general(const Batch& batch, const Temperature& temp,
                                             const LossOptions& opt) {
  batch.validate();
  ad::Value logits = scaled_logits(batch.enhanced, batch.text_general, temp, opt);
  ad::Value visual_axis = ad::cross_entropy_rows(logits, to_zero_based(batch.general_targets));
  ad::Value text_axis =
      ad::grouped_nce_text_axis(ad::transpose(logits), to_zero_based(batch.general_targets));
  return {visual_axis, text_axis};
}

TotalLoss total_loss(const Batch& batch, const Temperature& temp, const LossOptions& opt) {
  TotalLoss out;
  out.visual_fine = loss_visual_fine(batch, temp, opt);
  out.text_fine = loss_text_fine(batch, temp, opt);
  auto [vg, tg] = loss_general(batch, temp, opt);
  out.visual_general = vg;
  out.text_general = tg;
  out.total = ad::scale(
      ad::add(ad::add(out.visual_fine, out.text_fine), ad::add(out.visual_general, out.text_general)),
      0.5);
  return out;
}

}  // namespace tthf::objective
