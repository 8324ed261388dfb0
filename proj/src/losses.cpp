#include "travdiff/losses.hpp"

namespace travdiff::losses {

double loss_dir_value(const Field& x0_hat, Pixel start, Pixel goal) {
  nn::TapeT<double> t;
  return t.val(loss_dir(t, field_leaf_cast(t, x0_hat), start, goal)).data[0];
}

Field path_distribution_value(const Field& logits, double temp) {
  nn::TapeT<double> t;
  int p = path_distribution(t, field_leaf_cast(t, logits), temp);
  Field out(logits.rows, logits.cols);
  const auto& v = t.val(p).data;
  for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<float>(v[i]);
  return out;
}

double loss_trav_value(const std::vector<Field>& logits, const std::vector<Field>& trav,
                       double temp) {
  nn::TapeT<double> t;
  std::vector<int> ln, tn;
  for (const Field& f : logits) ln.push_back(field_leaf_cast(t, f));
  for (const Field& f : trav) tn.push_back(field_leaf_cast(t, f));
  return t.val(loss_trav(t, ln, tn, temp)).data[0];
}

double loss_mass_value(const Field& x0_hat) {
  nn::TapeT<double> t;
  return t.val(loss_mass(t, field_leaf_cast(t, x0_hat))).data[0];
}

double loss_distill_value(const Field& pred, const Field& teacher) {
  nn::TapeT<double> t;
  return t.val(loss_distill(t, field_leaf_cast(t, pred), field_leaf_cast(t, teacher))).data[0];
}

double loss_noise_value(const Field& eps_hat, const Field& eps) {
  nn::TapeT<double> t;
  return t.val(loss_noise(t, field_leaf_cast(t, eps_hat), field_leaf_cast(t, eps))).data[0];
}

double baseline_losses(const Field& pred_traj, const Field& gt_traj, const Field& pred_start,
                       const Field& gt_start, const Field& pred_goal, const Field& gt_goal,
                       double lambda_dist, double lambda_last) {
  auto mse_v = [](const Field& a, const Field& b) {
    if (a.rows != b.rows || a.cols != b.cols)
      throw std::invalid_argument("baseline_losses: shape mismatch");
    double s = 0;
    for (size_t i = 0; i < a.v.size(); ++i) {
      double d = static_cast<double>(a.v[i]) - b.v[i];
      s += d * d;
    }
    return s / static_cast<double>(a.v.size());
  };
  return lambda_dist * mse_v(pred_traj, gt_traj) +
         lambda_last * 0.5 * (mse_v(pred_start, gt_start) + mse_v(pred_goal, gt_goal));
}

}  // namespace travdiff::losses
