#include "crn/cru.hpp"

#include <cmath>
#include <string>

#include "crn/errors.hpp"
#include "crn/rng.hpp"

namespace crn {

namespace {

Matrix uniform_matrix(int rows, int cols, Rng& rng) {
  const double bound = std::sqrt(1.0 / cols);
  Matrix m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = rng.uniform(-bound, bound);
  return m;
}

void check_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw NumericError(std::string("cru_step: non-finite ") + what);
}

}  // namespace

CruCell CruCell::zeros(int n_a, int n_o) {
  const Matrix aa = Matrix::Zero(n_a, n_a);
  const Matrix oo = Matrix::Zero(n_o, n_o);
  return CruCell{aa, aa, aa, aa, aa, aa, aa, oo, oo, oo, oo, oo, oo,
                 Matrix::Zero(n_a, n_o), Matrix::Zero(n_o, n_a)};
}

CruCell CruCell::random(int n_a, int n_o, Rng& rng) {
  CruCell c = zeros(n_a, n_o);
  for (auto& p : c.parameters()) {
    *p.value = uniform_matrix(static_cast<int>(p.value->rows()),
                              static_cast<int>(p.value->cols()), rng);
  }
  return c;
}

std::vector<ParamRef> CruCell::parameters(const std::string& prefix) {
  return {{prefix + "w_za", &w_za}, {prefix + "w_ra", &w_ra}, {prefix + "w_i", &w_i},
          {prefix + "w_a", &w_a},   {prefix + "u_za", &u_za}, {prefix + "u_ra", &u_ra},
          {prefix + "u_a", &u_a},   {prefix + "w_zo", &w_zo}, {prefix + "w_ro", &w_ro},
          {prefix + "w_o", &w_o},   {prefix + "u_zo", &u_zo}, {prefix + "u_ro", &u_ro},
          {prefix + "u_o", &u_o},   {prefix + "u_i", &u_i},   {prefix + "i_o", &i_o}};
}

std::vector<ConstParamRef> CruCell::parameters(const std::string& prefix) const {
  std::vector<ConstParamRef> out;
  for (auto& p : const_cast<CruCell*>(this)->parameters(prefix)) out.push_back({p.name, p.value});
  return out;
}

CruStepResult cru_step(const CruCell& cell, const Vector& action_in, const Vector& response_in,
                       const CruState& prev) {
  const int n_a = cell.n_a();
  const int n_o = cell.n_o();
  if (action_in.size() != n_a || prev.action.size() != n_a) {
    throw DimensionError("cru_step: action input/memory width differs from n_a=" +
                         std::to_string(n_a));
  }
  if (response_in.size() != n_o || prev.response.size() != n_o) {
    throw DimensionError("cru_step: response input/memory width differs from n_o=" +
                         std::to_string(n_o));
  }
  check_finite(action_in, "action input");
  check_finite(response_in, "response input");
  check_finite(prev.action, "action memory");
  check_finite(prev.response, "response memory");

  CruStepResult out;
  StepCache& c = out.cache;
  c.action_in = action_in;
  c.response_in = response_in;
  c.prev = prev;

  const Vector& a = action_in;
  const Vector& o = response_in;
  const Vector& a_mem = prev.action;
  const Vector& o_mem = prev.response;

  c.z_a = sigmoid(cell.w_za * a + cell.u_za * a_mem);
  c.r_a = sigmoid(cell.w_ra * a + cell.u_ra * a_mem);
  c.z_o = sigmoid(cell.w_zo * o + cell.u_zo * o_mem);
  c.r_o = sigmoid(cell.w_ro * o + cell.u_ro * o_mem);
  c.r_i = sigmoid(cell.w_i * a + cell.u_i * o_mem);
  c.action_candidate = tanh(cell.w_a * a + cell.u_a * c.r_a.cwiseProduct(a_mem));
  c.response_candidate =
      tanh(cell.w_o * o + cell.u_o * c.r_o.cwiseProduct(o_mem) +
           cell.i_o * c.r_i.cwiseProduct(c.action_candidate));

  out.next.action = (1.0 - c.z_a.array()).matrix().cwiseProduct(a_mem) +
                    c.z_a.cwiseProduct(c.action_candidate);
  out.next.response = (1.0 - c.z_o.array()).matrix().cwiseProduct(o_mem) +
                      c.z_o.cwiseProduct(c.response_candidate);
  return out;
}

CruStepGrads cru_backward(const CruCell& cell, const StepCache& c, const CruState& grad_next,
                          CruCell& g) {
  const int n_a = cell.n_a();
  const int n_o = cell.n_o();
  if (c.z_a.size() != n_a || c.z_o.size() != n_o || c.prev.action.size() != n_a ||
      c.prev.response.size() != n_o) {
    throw ConsistencyError("cru_backward: cache does not match the cell dimensions");
  }
  if (grad_next.action.size() != n_a || grad_next.response.size() != n_o) {
    throw DimensionError("cru_backward: upstream gradient has the wrong width");
  }

  const Vector& a = c.action_in;
  const Vector& o = c.response_in;
  const Vector& a_mem = c.prev.action;
  const Vector& o_mem = c.prev.response;
  const Vector& da_next = grad_next.action;
  const Vector& do_next = grad_next.response;

  CruStepGrads out;
  out.prev.action = da_next.cwiseProduct((1.0 - c.z_a.array()).matrix());
  out.prev.response = do_next.cwiseProduct((1.0 - c.z_o.array()).matrix());

  // Response pathway.
  const Vector d_oc = do_next.cwiseProduct(c.z_o);
  const Vector d_zo = do_next.cwiseProduct(c.response_candidate - o_mem);
  const Vector d_oc_pre =
      d_oc.cwiseProduct((1.0 - c.response_candidate.array().square()).matrix());

  const Vector ro_o = c.r_o.cwiseProduct(o_mem);
  const Vector ri_ac = c.r_i.cwiseProduct(c.action_candidate);
  g.w_o.noalias() += d_oc_pre * o.transpose();
  g.u_o.noalias() += d_oc_pre * ro_o.transpose();
  g.i_o.noalias() += d_oc_pre * ri_ac.transpose();
  out.response_in = cell.w_o.transpose() * d_oc_pre;
  const Vector d_ro_o = cell.u_o.transpose() * d_oc_pre;
  const Vector d_ri_ac = cell.i_o.transpose() * d_oc_pre;
  const Vector d_ro = d_ro_o.cwiseProduct(o_mem);
  out.prev.response += d_ro_o.cwiseProduct(c.r_o);
  const Vector d_ri = d_ri_ac.cwiseProduct(c.action_candidate);

  // Action candidate receives gradient from its own memory update and from
  // the interaction term of the response candidate.
  const Vector d_ac = da_next.cwiseProduct(c.z_a) + d_ri_ac.cwiseProduct(c.r_i);
  const Vector d_za = da_next.cwiseProduct(c.action_candidate - a_mem);
  const Vector d_ac_pre =
      d_ac.cwiseProduct((1.0 - c.action_candidate.array().square()).matrix());

  const Vector ra_a = c.r_a.cwiseProduct(a_mem);
  g.w_a.noalias() += d_ac_pre * a.transpose();
  g.u_a.noalias() += d_ac_pre * ra_a.transpose();
  out.action_in = cell.w_a.transpose() * d_ac_pre;
  const Vector d_ra_a = cell.u_a.transpose() * d_ac_pre;
  const Vector d_ra = d_ra_a.cwiseProduct(a_mem);
  out.prev.action += d_ra_a.cwiseProduct(c.r_a);

  auto sig_grad = [](const Vector& d, const Vector& s) {
    return Vector(d.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix())));
  };
  const Vector p_za = sig_grad(d_za, c.z_a);
  const Vector p_ra = sig_grad(d_ra, c.r_a);
  const Vector p_zo = sig_grad(d_zo, c.z_o);
  const Vector p_ro = sig_grad(d_ro, c.r_o);
  const Vector p_ri = sig_grad(d_ri, c.r_i);

  g.w_za.noalias() += p_za * a.transpose();
  g.u_za.noalias() += p_za * a_mem.transpose();
  g.w_ra.noalias() += p_ra * a.transpose();
  g.u_ra.noalias() += p_ra * a_mem.transpose();
  g.w_zo.noalias() += p_zo * o.transpose();
  g.u_zo.noalias() += p_zo * o_mem.transpose();
  g.w_ro.noalias() += p_ro * o.transpose();
  g.u_ro.noalias() += p_ro * o_mem.transpose();
  g.w_i.noalias() += p_ri * a.transpose();
  g.u_i.noalias() += p_ri * o_mem.transpose();

  out.action_in.noalias() += cell.w_za.transpose() * p_za + cell.w_ra.transpose() * p_ra +
                             cell.w_i.transpose() * p_ri;
  out.response_in.noalias() += cell.w_zo.transpose() * p_zo + cell.w_ro.transpose() * p_ro;
  out.prev.action.noalias() += cell.u_za.transpose() * p_za + cell.u_ra.transpose() * p_ra;
  out.prev.response.noalias() += cell.u_zo.transpose() * p_zo + cell.u_ro.transpose() * p_ro +
                                 cell.u_i.transpose() * p_ri;
  return out;
}

namespace {

Matrix sigmoid_m(const Matrix& x) {
  return x.unaryExpr([](double v) { return sigmoid(v); });
}
Matrix tanh_m(const Matrix& x) {
  return x.unaryExpr([](double v) { return std::tanh(v); });
}
Matrix sigmoid_grad(const Matrix& d, const Matrix& s) {
  return (d.array() * s.array() * (1.0 - s.array())).matrix();
}

}  // namespace

CruBatchState cru_step_batch(const CruCell& cell, const Matrix& a, const Matrix& o,
                             const CruBatchState& prev, CruBatchCache* cache) {
  const int n_a = cell.n_a();
  const int n_o = cell.n_o();
  const auto k = a.cols();
  if (a.rows() != n_a || prev.action.rows() != n_a || o.rows() != n_o ||
      prev.response.rows() != n_o || o.cols() != k || prev.action.cols() != k ||
      prev.response.cols() != k) {
    throw DimensionError("cru_step_batch: input or memory shape does not match the cell");
  }
  if (!a.allFinite() || !o.allFinite() || !prev.action.allFinite() || !prev.response.allFinite()) {
    throw NumericError("cru_step_batch: non-finite input or memory");
  }
  const Matrix& a_mem = prev.action;
  const Matrix& o_mem = prev.response;

  CruBatchCache local;
  CruBatchCache& c = cache ? *cache : local;
  c.z_a = sigmoid_m(cell.w_za * a + cell.u_za * a_mem);
  c.r_a = sigmoid_m(cell.w_ra * a + cell.u_ra * a_mem);
  c.z_o = sigmoid_m(cell.w_zo * o + cell.u_zo * o_mem);
  c.r_o = sigmoid_m(cell.w_ro * o + cell.u_ro * o_mem);
  c.r_i = sigmoid_m(cell.w_i * a + cell.u_i * o_mem);
  c.action_candidate = tanh_m(cell.w_a * a + cell.u_a * c.r_a.cwiseProduct(a_mem));
  c.response_candidate = tanh_m(cell.w_o * o + cell.u_o * c.r_o.cwiseProduct(o_mem) +
                                cell.i_o * c.r_i.cwiseProduct(c.action_candidate));

  CruBatchState next;
  next.action = ((1.0 - c.z_a.array()) * a_mem.array() + c.z_a.array() * c.action_candidate.array()).matrix();
  next.response =
      ((1.0 - c.z_o.array()) * o_mem.array() + c.z_o.array() * c.response_candidate.array()).matrix();
  if (cache) {
    c.action_in = a;
    c.response_in = o;
    c.prev_action = a_mem;
    c.prev_response = o_mem;
  }
  return next;
}

CruBatchGrads cru_backward_batch(const CruCell& cell, const CruBatchCache& c,
                                 const CruBatchState& grad_next, CruCell& g) {
  if (c.z_a.rows() != cell.n_a() || c.z_o.rows() != cell.n_o() ||
      c.prev_action.cols() != c.z_a.cols()) {
    throw ConsistencyError("cru_backward_batch: cache does not match the cell dimensions");
  }
  if (grad_next.action.rows() != cell.n_a() || grad_next.response.rows() != cell.n_o() ||
      grad_next.action.cols() != c.z_a.cols() || grad_next.response.cols() != c.z_a.cols()) {
    throw DimensionError("cru_backward_batch: upstream gradient has the wrong shape");
  }
  const Matrix& a = c.action_in;
  const Matrix& o = c.response_in;
  const Matrix& a_mem = c.prev_action;
  const Matrix& o_mem = c.prev_response;
  const Matrix& da_next = grad_next.action;
  const Matrix& do_next = grad_next.response;

  CruBatchGrads out;
  out.prev.action = (da_next.array() * (1.0 - c.z_a.array())).matrix();
  out.prev.response = (do_next.array() * (1.0 - c.z_o.array())).matrix();

  const Matrix d_oc = do_next.cwiseProduct(c.z_o);
  const Matrix d_zo = do_next.cwiseProduct(c.response_candidate - o_mem);
  const Matrix d_oc_pre = (d_oc.array() * (1.0 - c.response_candidate.array().square())).matrix();

  g.w_o.noalias() += d_oc_pre * o.transpose();
  g.u_o.noalias() += d_oc_pre * c.r_o.cwiseProduct(o_mem).transpose();
  g.i_o.noalias() += d_oc_pre * c.r_i.cwiseProduct(c.action_candidate).transpose();
  out.response_in.noalias() = cell.w_o.transpose() * d_oc_pre;
  const Matrix d_ro_o = cell.u_o.transpose() * d_oc_pre;
  const Matrix d_ri_ac = cell.i_o.transpose() * d_oc_pre;
  const Matrix d_ro = d_ro_o.cwiseProduct(o_mem);
  out.prev.response += d_ro_o.cwiseProduct(c.r_o);
  const Matrix d_ri = d_ri_ac.cwiseProduct(c.action_candidate);

  const Matrix d_ac = da_next.cwiseProduct(c.z_a) + d_ri_ac.cwiseProduct(c.r_i);
  const Matrix d_za = da_next.cwiseProduct(c.action_candidate - a_mem);
  const Matrix d_ac_pre = (d_ac.array() * (1.0 - c.action_candidate.array().square())).matrix();

  g.w_a.noalias() += d_ac_pre * a.transpose();
  g.u_a.noalias() += d_ac_pre * c.r_a.cwiseProduct(a_mem).transpose();
  out.action_in.noalias() = cell.w_a.transpose() * d_ac_pre;
  const Matrix d_ra_a = cell.u_a.transpose() * d_ac_pre;
  const Matrix d_ra = d_ra_a.cwiseProduct(a_mem);
  out.prev.action += d_ra_a.cwiseProduct(c.r_a);

  const Matrix p_za = sigmoid_grad(d_za, c.z_a);
  const Matrix p_ra = sigmoid_grad(d_ra, c.r_a);
  const Matrix p_zo = sigmoid_grad(d_zo, c.z_o);
  const Matrix p_ro = sigmoid_grad(d_ro, c.r_o);
  const Matrix p_ri = sigmoid_grad(d_ri, c.r_i);

  g.w_za.noalias() += p_za * a.transpose();
  g.u_za.noalias() += p_za * a_mem.transpose();
  g.w_ra.noalias() += p_ra * a.transpose();
  g.u_ra.noalias() += p_ra * a_mem.transpose();
  g.w_zo.noalias() += p_zo * o.transpose();
  g.u_zo.noalias() += p_zo * o_mem.transpose();
  g.w_ro.noalias() += p_ro * o.transpose();
  g.u_ro.noalias() += p_ro * o_mem.transpose();
  g.w_i.noalias() += p_ri * a.transpose();
  g.u_i.noalias() += p_ri * o_mem.transpose();

  out.action_in.noalias() += cell.w_za.transpose() * p_za;
  out.action_in.noalias() += cell.w_ra.transpose() * p_ra;
  out.action_in.noalias() += cell.w_i.transpose() * p_ri;
  out.response_in.noalias() += cell.w_zo.transpose() * p_zo;
  out.response_in.noalias() += cell.w_ro.transpose() * p_ro;
  out.prev.action.noalias() += cell.u_za.transpose() * p_za;
  out.prev.action.noalias() += cell.u_ra.transpose() * p_ra;
  out.prev.response.noalias() += cell.u_zo.transpose() * p_zo;
  out.prev.response.noalias() += cell.u_ro.transpose() * p_ro;
  out.prev.response.noalias() += cell.u_i.transpose() * p_ri;
  return out;
}

CruUnroll unroll(const CruCell& cell, const std::vector<std::pair<Vector, Vector>>& inputs,
                 const CruState& init) {
  CruUnroll out;
  out.final_state = init;
  out.caches.reserve(inputs.size());
  for (const auto& [a, o] : inputs) {
    auto step = cru_step(cell, a, o, out.final_state);
    out.final_state = std::move(step.next);
    out.caches.push_back(std::move(step.cache));
  }
  return out;
}

}  // namespace crn
