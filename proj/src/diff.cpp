#include "retrofit/diff.hpp"

#include <cmath>
#include <limits>

namespace retrofit::diff {

namespace {

bool g_corrupt_tanh = false;

[[maybe_unused]] bool is_unary(Op op) {
  switch (op) {
    case Op::kTanh:
    case Op::kRelu:
    case Op::kIdentity:
    case Op::kSin:
    case Op::kCos:
    case Op::kSqrt:
    case Op::kAtanh:
    case Op::kAcos:
    case Op::kAcosh:
    case Op::kClamp:
      return true;
    default:
      return false;
  }
}

double unary_value(Op op, double x, double lo, double hi) {
  switch (op) {
    case Op::kTanh: return std::tanh(x);
    case Op::kRelu: return x > 0.0 ? x : 0.0;
    case Op::kIdentity: return x;
    case Op::kSin: return std::sin(x);
    case Op::kCos: return std::cos(x);
    case Op::kSqrt: return std::sqrt(std::max(x, 0.0));
    case Op::kAtanh: return std::atanh(std::min(std::max(x, -1.0 + 1e-16), 1.0 - 1e-16));
    case Op::kAcos: return std::acos(std::min(std::max(x, -1.0), 1.0));
    case Op::kAcosh: return std::acosh(std::max(x, 1.0));
    case Op::kClamp: return std::min(std::max(x, lo), hi);
    default: return 0.0;
  }
}

// First and second derivatives with the boundary convention: 0 where the
// primitive is not differentiable or leaves its domain.
void unary_derivs(Op op, double x, double lo, double hi, double& d1,
                  double& d2) {
  switch (op) {
    case Op::kTanh: {
      const double t = std::tanh(x);
      d1 = 1.0 - t * t;
      if (g_corrupt_tanh) d1 *= 1.0 + 1e-3;
      d2 = -2.0 * t * (1.0 - t * t);
      return;
    }
    case Op::kRelu:
      d1 = x > 0.0 ? 1.0 : 0.0;
      d2 = 0.0;
      return;
    case Op::kIdentity:
      d1 = 1.0;
      d2 = 0.0;
      return;
    case Op::kSin:
      d1 = std::cos(x);
      d2 = -std::sin(x);
      return;
    case Op::kCos:
      d1 = -std::sin(x);
      d2 = -std::cos(x);
      return;
    case Op::kSqrt:
      if (x > 0.0) {
        const double s = std::sqrt(x);
        d1 = 0.5 / s;
        d2 = -0.25 / (x * s);
      } else {
        d1 = d2 = 0.0;
      }
      return;
    case Op::kAtanh: {
      const double m = 1.0 - x * x;
      if (m > 0.0) {
        d1 = 1.0 / m;
        d2 = 2.0 * x / (m * m);
      } else {
        d1 = d2 = 0.0;
      }
      return;
    }
    case Op::kAcos: {
      const double m = 1.0 - x * x;
      if (m > 0.0) {
        const double s = std::sqrt(m);
        d1 = -1.0 / s;
        d2 = -x / (m * s);
      } else {
        d1 = d2 = 0.0;
      }
      return;
    }
    case Op::kAcosh: {
      const double m = x * x - 1.0;
      if (m > 0.0) {
        const double s = std::sqrt(m);
        d1 = 1.0 / s;
        d2 = -x / (m * s);
      } else {
        d1 = d2 = 0.0;
      }
      return;
    }
    case Op::kClamp:
      d1 = (x > lo && x < hi) ? 1.0 : 0.0;
      d2 = 0.0;
      return;
    default:
      d1 = d2 = 0.0;
      return;
  }
}

}  // namespace

void set_corrupt_tanh_derivative(bool enabled) { g_corrupt_tanh = enabled; }

int Program::push(Instr in) {
  if (output_ >= 0) throw Error("program is sealed");
  instrs_.push_back(std::move(in));
  return static_cast<int>(instrs_.size()) - 1;
}

int Program::input(int dim) {
  if (input_dim_ >= 0) throw Error("program already has an input node");
  if (!instrs_.empty()) throw Error("input must be the first node");
  input_dim_ = dim;
  Instr in;
  in.op = Op::kInput;
  in.len = dim;
  return push(std::move(in));
}

int Program::constant(Vec v) {
  Instr in;
  in.op = Op::kConst;
  in.len = static_cast<int>(v.size());
  in.cvec = std::move(v);
  return push(std::move(in));
}

void Program::rebind_constant(int node, const Vec& v) {
  Instr& in = instrs_.at(static_cast<size_t>(node));
  if (in.op != Op::kConst || in.len != v.size())
    throw Error("rebind_constant target mismatch");
  in.cvec = v;
}

int Program::param_vec(const std::string& name, int len) {
  vec_params_.push_back({name, len});
  Instr in;
  in.op = Op::kParamVec;
  in.param = static_cast<int>(vec_params_.size()) - 1;
  in.len = len;
  return push(std::move(in));
}

int Program::mat_param(const std::string& name, int rows, int cols) {
  mat_params_.push_back({name, rows, cols});
  return static_cast<int>(mat_params_.size()) - 1;
}

int Program::matvec(int mat_param_id, int x) {
  const auto& spec = mat_params_.at(static_cast<size_t>(mat_param_id));
  if (node_len(x) != spec.cols) throw DimMismatch("matvec operand length");
  Instr in;
  in.op = Op::kMatVec;
  in.param = mat_param_id;
  in.a = x;
  in.len = spec.rows;
  return push(std::move(in));
}

int Program::const_matvec(Mat m, int x) {
  if (node_len(x) != m.cols()) throw DimMismatch("const_matvec operand length");
  Instr in;
  in.op = Op::kConstMatVec;
  in.a = x;
  in.len = static_cast<int>(m.rows());
  in.cmat = std::move(m);
  return push(std::move(in));
}

int Program::binary(Op op, int a, int b) {
  const int la = node_len(a);
  const int lb = node_len(b);
  if (op == Op::kDot) {
    if (la != lb) throw DimMismatch("dot operands must match");
    Instr in;
    in.op = op;
    in.a = a;
    in.b = b;
    in.len = 1;
    return push(std::move(in));
  }
  if (la != lb && la != 1 && lb != 1)
    throw DimMismatch("elementwise operands must match or broadcast");
  Instr in;
  in.op = op;
  in.a = a;
  in.b = b;
  in.len = std::max(la, lb);
  return push(std::move(in));
}

int Program::unary(Op op, int a) {
  Instr in;
  in.op = op;
  in.a = a;
  in.len = node_len(a);
  return push(std::move(in));
}

int Program::add(int a, int b) { return binary(Op::kAdd, a, b); }
int Program::sub(int a, int b) { return binary(Op::kSub, a, b); }
int Program::mul(int a, int b) { return binary(Op::kMul, a, b); }
int Program::div(int a, int b) { return binary(Op::kDiv, a, b); }
int Program::dot(int a, int b) { return binary(Op::kDot, a, b); }

int Program::norm(int a) {
  Instr in;
  in.op = Op::kNorm;
  in.a = a;
  in.len = 1;
  return push(std::move(in));
}

int Program::tanh(int a) { return unary(Op::kTanh, a); }
int Program::relu(int a) { return unary(Op::kRelu, a); }
int Program::identity(int a) { return unary(Op::kIdentity, a); }
int Program::sin(int a) { return unary(Op::kSin, a); }
int Program::cos(int a) { return unary(Op::kCos, a); }
int Program::sqrt(int a) { return unary(Op::kSqrt, a); }
int Program::atanh(int a) { return unary(Op::kAtanh, a); }
int Program::acos(int a) { return unary(Op::kAcos, a); }
int Program::acosh(int a) { return unary(Op::kAcosh, a); }

int Program::clamp(int a, double lo, double hi) {
  Instr in;
  in.op = Op::kClamp;
  in.a = a;
  in.lo = lo;
  in.hi = hi;
  in.len = node_len(a);
  return push(std::move(in));
}

int Program::concat(int a, int b) {
  Instr in;
  in.op = Op::kConcat;
  in.a = a;
  in.b = b;
  in.len = node_len(a) + node_len(b);
  return push(std::move(in));
}

int Program::slice(int a, int off, int len) {
  if (off < 0 || len <= 0 || off + len > node_len(a))
    throw DimMismatch("slice out of range");
  Instr in;
  in.op = Op::kSlice;
  in.a = a;
  in.off = off;
  in.len = len;
  return push(std::move(in));
}

void Program::set_output(int node) {
  if (node < 0 || node >= static_cast<int>(instrs_.size()))
    throw Error("bad output node");
  output_ = node;
}

int Program::find_mat_param(const std::string& name) const {
  for (size_t i = 0; i < mat_params_.size(); ++i)
    if (mat_params_[i].name == name) return static_cast<int>(i);
  return -1;
}

int Program::find_vec_param(const std::string& name) const {
  for (size_t i = 0; i < vec_params_.size(); ++i)
    if (vec_params_[i].name == name) return static_cast<int>(i);
  return -1;
}

ParamStore ParamStore::zeros_like(const Program& p) {
  ParamStore out;
  for (const auto& s : p.mat_params()) out.mats.push_back(Mat::Zero(s.rows, s.cols));
  for (const auto& s : p.vec_params()) out.vecs.push_back(Vec::Zero(s.len));
  return out;
}

void ParamStore::set_zero() {
  for (auto& m : mats) m.setZero();
  for (auto& v : vecs) v.setZero();
}

Mat& ParamStore::mat(const Program& p, const std::string& name) {
  const int id = p.find_mat_param(name);
  if (id < 0) throw UnknownParameter("unknown matrix parameter '" + name + "'");
  return mats[static_cast<size_t>(id)];
}
Vec& ParamStore::vec(const Program& p, const std::string& name) {
  const int id = p.find_vec_param(name);
  if (id < 0) throw UnknownParameter("unknown vector parameter '" + name + "'");
  return vecs[static_cast<size_t>(id)];
}
const Mat& ParamStore::mat(const Program& p, const std::string& name) const {
  return const_cast<ParamStore*>(this)->mat(p, name);
}
const Vec& ParamStore::vec(const Program& p, const std::string& name) const {
  return const_cast<ParamStore*>(this)->vec(p, name);
}

Engine::Engine(const Program& prog) : prog_(&prog) {
  const auto& instrs = prog.instrs();
  val_.resize(instrs.size());
  dot_.resize(instrs.size());
  bar_.resize(instrs.size());
  dbar_.resize(instrs.size());
  for (size_t i = 0; i < instrs.size(); ++i) {
    val_[i].resize(instrs[i].len);
    bar_[i].resize(instrs[i].len);
  }
}

void Engine::run_forward(const ParamStore& params, const Vec& x, int ndual) {
  if (x.size() != prog_->input_dim()) throw DimMismatch("input length");
  params_ = &params;
  ndual_ = ndual;
  const auto& instrs = prog_->instrs();
  for (size_t i = 0; i < instrs.size(); ++i) {
    const Instr& in = instrs[i];
    Vec& z = val_[i];
    Mat& zd = dot_[i];
    if (ndual > 0 && (zd.rows() != in.len || zd.cols() != ndual))
      zd.resize(in.len, ndual);

    switch (in.op) {
      case Op::kInput:
        z = x;
        if (ndual > 0) zd = Mat::Identity(in.len, ndual);
        break;
      case Op::kConst:
        z = in.cvec;
        if (ndual > 0) zd.setZero();
        break;
      case Op::kParamVec:
        z = params.vecs[static_cast<size_t>(in.param)];
        if (ndual > 0) zd.setZero();
        break;
      case Op::kMatVec: {
        const Mat& a = params.mats[static_cast<size_t>(in.param)];
        z.noalias() = a * val_[static_cast<size_t>(in.a)];
        if (ndual > 0) zd.noalias() = a * dot_[static_cast<size_t>(in.a)];
        break;
      }
      case Op::kConstMatVec:
        z.noalias() = in.cmat * val_[static_cast<size_t>(in.a)];
        if (ndual > 0)
          zd.noalias() = in.cmat * dot_[static_cast<size_t>(in.a)];
        break;
      case Op::kAdd:
      case Op::kSub:
      case Op::kMul:
      case Op::kDiv: {
        const Vec& a = val_[static_cast<size_t>(in.a)];
        const Vec& b = val_[static_cast<size_t>(in.b)];
        const Mat& ad = dot_[static_cast<size_t>(in.a)];
        const Mat& bd = dot_[static_cast<size_t>(in.b)];
        const bool ba = a.size() == 1 && in.len > 1;
        const bool bb = b.size() == 1 && in.len > 1;
        for (int k = 0; k < in.len; ++k) {
          const double av = ba ? a[0] : a[k];
          const double bv = bb ? b[0] : b[k];
          switch (in.op) {
            case Op::kAdd: z[k] = av + bv; break;
            case Op::kSub: z[k] = av - bv; break;
            case Op::kMul: z[k] = av * bv; break;
            default: z[k] = av / bv; break;
          }
          if (ndual > 0) {
            for (int j = 0; j < ndual; ++j) {
              const double adj = ba ? ad(0, j) : ad(k, j);
              const double bdj = bb ? bd(0, j) : bd(k, j);
              switch (in.op) {
                case Op::kAdd: zd(k, j) = adj + bdj; break;
                case Op::kSub: zd(k, j) = adj - bdj; break;
                case Op::kMul: zd(k, j) = adj * bv + av * bdj; break;
                default: zd(k, j) = adj / bv - av * bdj / (bv * bv); break;
              }
            }
          }
        }
        break;
      }
      case Op::kDot: {
        const Vec& a = val_[static_cast<size_t>(in.a)];
        const Vec& b = val_[static_cast<size_t>(in.b)];
        z[0] = a.dot(b);
        if (ndual > 0)
          zd.noalias() = a.transpose() * dot_[static_cast<size_t>(in.b)] +
                         b.transpose() * dot_[static_cast<size_t>(in.a)];
        break;
      }
      case Op::kNorm: {
        const Vec& a = val_[static_cast<size_t>(in.a)];
        const double s = a.norm();
        z[0] = s;
        if (ndual > 0) {
          if (s > 1e-300)
            zd.noalias() = (a.transpose() * dot_[static_cast<size_t>(in.a)]) / s;
          else
            zd.setZero();
        }
        break;
      }
      case Op::kConcat: {
        const Vec& a = val_[static_cast<size_t>(in.a)];
        const Vec& b = val_[static_cast<size_t>(in.b)];
        z.head(a.size()) = a;
        z.tail(b.size()) = b;
        if (ndual > 0) {
          zd.topRows(a.size()) = dot_[static_cast<size_t>(in.a)];
          zd.bottomRows(b.size()) = dot_[static_cast<size_t>(in.b)];
        }
        break;
      }
      case Op::kSlice:
        z = val_[static_cast<size_t>(in.a)].segment(in.off, in.len);
        if (ndual > 0)
          zd = dot_[static_cast<size_t>(in.a)].middleRows(in.off, in.len);
        break;
      default: {  // unary
        const Vec& a = val_[static_cast<size_t>(in.a)];
        const Mat& ad = dot_[static_cast<size_t>(in.a)];
        for (int k = 0; k < in.len; ++k) {
          z[k] = unary_value(in.op, a[k], in.lo, in.hi);
          if (ndual > 0) {
            double d1, d2;
            unary_derivs(in.op, a[k], in.lo, in.hi, d1, d2);
            for (int j = 0; j < ndual; ++j) zd(k, j) = d1 * ad(k, j);
          }
        }
        break;
      }
    }
  }
}

const Vec& Engine::forward(const ParamStore& params, const Vec& x) {
  run_forward(params, x, 0);
  return val_[static_cast<size_t>(prog_->output_node())];
}

const Vec& Engine::forward_with_jacobian(const ParamStore& params,
                                         const Vec& x, Mat* jac) {
  run_forward(params, x, prog_->input_dim());
  if (jac) *jac = dot_[static_cast<size_t>(prog_->output_node())];
  return val_[static_cast<size_t>(prog_->output_node())];
}

void Engine::run_backward(GradTable& grads) {
  const auto& instrs = prog_->instrs();
  for (size_t idx = instrs.size(); idx-- > 0;) {
    const Instr& in = instrs[idx];
    const Vec& zb = bar_[idx];
    const Mat& zdb = dbar_[idx];
    const bool dual = ndual_ > 0;

    switch (in.op) {
      case Op::kInput:
      case Op::kConst:
        break;
      case Op::kParamVec:
        grads.vecs[static_cast<size_t>(in.param)] += zb;
        break;
      case Op::kMatVec: {
        const Mat& a = params_->mats[static_cast<size_t>(in.param)];
        const size_t ia = static_cast<size_t>(in.a);
        bar_[ia].noalias() += a.transpose() * zb;
        Mat& ag = grads.mats[static_cast<size_t>(in.param)];
        ag.noalias() += zb * val_[ia].transpose();
        if (dual) {
          dbar_[ia].noalias() += a.transpose() * zdb;
          ag.noalias() += zdb * dot_[ia].transpose();
        }
        break;
      }
      case Op::kConstMatVec: {
        const size_t ia = static_cast<size_t>(in.a);
        bar_[ia].noalias() += in.cmat.transpose() * zb;
        if (dual) dbar_[ia].noalias() += in.cmat.transpose() * zdb;
        break;
      }
      case Op::kAdd:
      case Op::kSub:
      case Op::kMul:
      case Op::kDiv: {
        const size_t ia = static_cast<size_t>(in.a);
        const size_t ib = static_cast<size_t>(in.b);
        const Vec& a = val_[ia];
        const Vec& b = val_[ib];
        const Mat& ad = dot_[ia];
        const Mat& bd = dot_[ib];
        const bool bca = a.size() == 1 && in.len > 1;
        const bool bcb = b.size() == 1 && in.len > 1;
        for (int k = 0; k < in.len; ++k) {
          const int ka = bca ? 0 : k;
          const int kb = bcb ? 0 : k;
          const double av = a[ka];
          const double bv = b[kb];
          switch (in.op) {
            case Op::kAdd: {
              bar_[ia][ka] += zb[k];
              bar_[ib][kb] += zb[k];
              if (dual)
                for (int j = 0; j < ndual_; ++j) {
                  dbar_[ia](ka, j) += zdb(k, j);
                  dbar_[ib](kb, j) += zdb(k, j);
                }
              break;
            }
            case Op::kSub: {
              bar_[ia][ka] += zb[k];
              bar_[ib][kb] -= zb[k];
              if (dual)
                for (int j = 0; j < ndual_; ++j) {
                  dbar_[ia](ka, j) += zdb(k, j);
                  dbar_[ib](kb, j) -= zdb(k, j);
                }
              break;
            }
            case Op::kMul: {
              bar_[ia][ka] += zb[k] * bv;
              bar_[ib][kb] += zb[k] * av;
              if (dual)
                for (int j = 0; j < ndual_; ++j) {
                  const double zdbj = zdb(k, j);
                  bar_[ia][ka] += zdbj * bd(kb, j);
                  bar_[ib][kb] += zdbj * ad(ka, j);
                  dbar_[ia](ka, j) += zdbj * bv;
                  dbar_[ib](kb, j) += zdbj * av;
                }
              break;
            }
            default: {  // kDiv
              const double inv_b = 1.0 / bv;
              const double inv_b2 = inv_b * inv_b;
              bar_[ia][ka] += zb[k] * inv_b;
              bar_[ib][kb] -= zb[k] * av * inv_b2;
              if (dual)
                for (int j = 0; j < ndual_; ++j) {
                  const double zdbj = zdb(k, j);
                  const double adj = ad(ka, j);
                  const double bdj = bd(kb, j);
                  bar_[ia][ka] -= zdbj * bdj * inv_b2;
                  bar_[ib][kb] += zdbj * (-adj * inv_b2 +
                                          2.0 * av * bdj * inv_b2 * inv_b);
                  dbar_[ia](ka, j) += zdbj * inv_b;
                  dbar_[ib](kb, j) -= zdbj * av * inv_b2;
                }
              break;
            }
          }
        }
        break;
      }
      case Op::kDot: {
        const size_t ia = static_cast<size_t>(in.a);
        const size_t ib = static_cast<size_t>(in.b);
        const double zb0 = zb[0];
        bar_[ia].noalias() += zb0 * val_[ib];
        bar_[ib].noalias() += zb0 * val_[ia];
        if (dual) {
          for (int j = 0; j < ndual_; ++j) {
            const double w = zdb(0, j);
            bar_[ia].noalias() += w * dot_[ib].col(j);
            bar_[ib].noalias() += w * dot_[ia].col(j);
            dbar_[ia].col(j).noalias() += w * val_[ib];
            dbar_[ib].col(j).noalias() += w * val_[ia];
          }
        }
        break;
      }
      case Op::kNorm: {
        const size_t ia = static_cast<size_t>(in.a);
        const Vec& a = val_[ia];
        const double s = val_[idx][0];
        if (s <= 1e-300) break;
        const double inv_s = 1.0 / s;
        bar_[ia].noalias() += (zb[0] * inv_s) * a;
        if (dual) {
          const Mat& zdot = dot_[idx];  // 1 x ndual, entries (a^T adot_j)/s
          for (int j = 0; j < ndual_; ++j) {
            const double w = zdb(0, j);
            bar_[ia].noalias() += w * inv_s * dot_[ia].col(j);
            bar_[ia].noalias() -= (w * zdot(0, j) * inv_s * inv_s) * a;
            dbar_[ia].col(j).noalias() += (w * inv_s) * a;
          }
        }
        break;
      }
      case Op::kConcat: {
        const size_t ia = static_cast<size_t>(in.a);
        const size_t ib = static_cast<size_t>(in.b);
        const int la = static_cast<int>(val_[ia].size());
        const int lb = static_cast<int>(val_[ib].size());
        bar_[ia] += zb.head(la);
        bar_[ib] += zb.tail(lb);
        if (dual) {
          dbar_[ia] += zdb.topRows(la);
          dbar_[ib] += zdb.bottomRows(lb);
        }
        break;
      }
      case Op::kSlice: {
        const size_t ia = static_cast<size_t>(in.a);
        bar_[ia].segment(in.off, in.len) += zb;
        if (dual) dbar_[ia].middleRows(in.off, in.len) += zdb;
        break;
      }
      default: {  // unary
        const size_t ia = static_cast<size_t>(in.a);
        const Vec& a = val_[ia];
        const Mat& ad = dot_[ia];
        for (int k = 0; k < in.len; ++k) {
          double d1, d2;
          unary_derivs(in.op, a[k], in.lo, in.hi, d1, d2);
          bar_[ia][k] += d1 * zb[k];
          if (dual) {
            double acc = 0.0;
            for (int j = 0; j < ndual_; ++j) {
              const double zdbj = zdb(k, j);
              acc += ad(k, j) * zdbj;
              dbar_[ia](k, j) += d1 * zdbj;
            }
            bar_[ia][k] += d2 * acc;
          }
        }
        break;
      }
    }
  }
}

void Engine::backward(const Vec& dl_dy, GradTable& grads) {
  const int out = prog_->output_node();
  for (size_t i = 0; i < bar_.size(); ++i) bar_[i].setZero();
  if (ndual_ > 0) {
    for (size_t i = 0; i < dbar_.size(); ++i) {
      dbar_[i].resize(val_[i].size(), ndual_);
      dbar_[i].setZero();
    }
  }
  bar_[static_cast<size_t>(out)] = dl_dy;
  run_backward(grads);
}

void Engine::backward_with_jacobian(const Vec& dl_dy, const Mat& dl_djac,
                                    GradTable& grads) {
  if (ndual_ == 0)
    throw Error("backward_with_jacobian requires forward_with_jacobian");
  const int out = prog_->output_node();
  for (size_t i = 0; i < bar_.size(); ++i) bar_[i].setZero();
  for (size_t i = 0; i < dbar_.size(); ++i) {
    dbar_[i].resize(val_[i].size(), ndual_);
    dbar_[i].setZero();
  }
  bar_[static_cast<size_t>(out)] = dl_dy;
  dbar_[static_cast<size_t>(out)] = dl_djac;
  run_backward(grads);
}

ValueJac value_and_jacobian(const Program& prog, const ParamStore& params,
                            const Vec& x) {
  Engine eng(prog);
  ValueJac out;
  out.value = eng.forward_with_jacobian(params, x, &out.jacobian);
  return out;
}

GradTable param_gradients(const Program& prog, const ParamStore& params,
                          const Vec& x, const JacobianLoss& loss,
                          double* loss_value) {
  Engine eng(prog);
  Mat jac;
  const Vec y = eng.forward_with_jacobian(params, x, &jac);
  Vec dl_dy = Vec::Zero(y.size());
  Mat dl_djac = Mat::Zero(jac.rows(), jac.cols());
  const double l = loss.eval(y, jac, dl_dy, dl_djac);
  if (loss_value) *loss_value = l;
  GradTable grads = ParamStore::zeros_like(prog);
  eng.backward_with_jacobian(dl_dy, dl_djac, grads);
  return grads;
}

Mat finite_diff_jacobian(const Program& prog, const ParamStore& params,
                         const Vec& x, double h) {
  Engine eng(prog);
  const int n = prog.input_dim();
  const int m = prog.output_dim();
  Mat jac(m, n);
  Vec xp = x;
  for (int j = 0; j < n; ++j) {
    const double save = xp[j];
    xp[j] = save + h;
    const Vec hi = eng.forward(params, xp);
    xp[j] = save - h;
    const Vec lo = eng.forward(params, xp);
    xp[j] = save;
    jac.col(j) = (hi - lo) / (2.0 * h);
  }
  return jac;
}

}  // namespace retrofit::diff
