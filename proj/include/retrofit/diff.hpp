#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "retrofit/errors.hpp"

namespace retrofit::diff {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Differentiable programs over a fixed primitive set. Nodes are vector
// valued; elementwise binaries broadcast a length-1 operand. Programs are
// immutable after set_output, evaluation state lives in Engine so one program
// can be evaluated concurrently from multiple engines.
//
// Derivative conventions at non-differentiable or domain-boundary points
// (relu kink, clamp edges, norm at zero, acos at +-1, ...): the propagated
// derivative is 0. The finite-difference oracle jitters evaluation points so
// the convention never disagrees with it on test inputs.

enum class Op : std::uint8_t {
  kInput,
  kConst,
  kParamVec,
  kMatVec,
  kConstMatVec,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kDot,
  kNorm,
  kTanh,
  kRelu,
  kIdentity,
  kSin,
  kCos,
  kSqrt,
  kAtanh,
  kAcos,
  kAcosh,
  kClamp,
  kConcat,
  kSlice,
};

struct Instr {
  Op op;
  int a = -1;
  int b = -1;
  int param = -1;  // kParamVec / kMatVec
  double lo = 0.0;
  double hi = 0.0;  // clamp bounds
  int off = 0;      // slice offset
  int len = 0;      // output length
  Vec cvec;         // kConst payload (rebindable)
  Mat cmat;         // kConstMatVec payload
};

struct MatParamSpec {
  std::string name;
  int rows = 0;
  int cols = 0;
};
struct VecParamSpec {
  std::string name;
  int len = 0;
};

class Program {
 public:
  int input(int dim);
  int constant(Vec v);
  void rebind_constant(int node, const Vec& v);

  int param_vec(const std::string& name, int len);
  int mat_param(const std::string& name, int rows, int cols);

  int matvec(int mat_param_id, int x);
  int const_matvec(Mat m, int x);

  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int div(int a, int b);
  int dot(int a, int b);
  int norm(int a);

  int tanh(int a);
  int relu(int a);
  int identity(int a);
  int sin(int a);
  int cos(int a);
  int sqrt(int a);
  int atanh(int a);
  int acos(int a);
  int acosh(int a);
  int clamp(int a, double lo, double hi);

  int concat(int a, int b);
  int slice(int a, int off, int len);

  void set_output(int node);

  int input_dim() const { return input_dim_; }
  int output_node() const { return output_; }
  int output_dim() const { return node_len(output_); }
  int node_len(int node) const { return instrs_[static_cast<size_t>(node)].len; }
  const std::vector<Instr>& instrs() const { return instrs_; }
  const std::vector<MatParamSpec>& mat_params() const { return mat_params_; }
  const std::vector<VecParamSpec>& vec_params() const { return vec_params_; }

  int find_mat_param(const std::string& name) const;  // -1 if absent
  int find_vec_param(const std::string& name) const;

 private:
  int push(Instr in);
  int unary(Op op, int a);
  int binary(Op op, int a, int b);

  std::vector<Instr> instrs_;
  std::vector<MatParamSpec> mat_params_;
  std::vector<VecParamSpec> vec_params_;
  int input_dim_ = -1;
  int output_ = -1;
};

// Parameter values / gradient accumulators, laid out parallel to the
// program's parameter specs.
struct ParamStore {
  std::vector<Mat> mats;
  std::vector<Vec> vecs;

  static ParamStore zeros_like(const Program& p);
  void set_zero();
  Mat& mat(const Program& p, const std::string& name);
  Vec& vec(const Program& p, const std::string& name);
  const Mat& mat(const Program& p, const std::string& name) const;
  const Vec& vec(const Program& p, const std::string& name) const;
};
using GradTable = ParamStore;

// Reusable evaluation workspace. forward() records the plain value tape,
// forward_with_jacobian() also propagates one dual column per input
// dimension; the matching backward() runs reverse accumulation over whatever
// the last forward recorded.
class Engine {
 public:
  explicit Engine(const Program& prog);

  const Vec& forward(const ParamStore& params, const Vec& x);
  // jac receives d(output)/d(input), output_dim x input_dim.
  const Vec& forward_with_jacobian(const ParamStore& params, const Vec& x,
                                   Mat* jac);

  // Reverse sweep seeding only output-value adjoints. Valid after either
  // forward flavor.
  void backward(const Vec& dl_dy, GradTable& grads);
  // Reverse sweep seeding value and Jacobian-entry adjoints. Valid after
  // forward_with_jacobian.
  void backward_with_jacobian(const Vec& dl_dy, const Mat& dl_djac,
                              GradTable& grads);

  const Program& program() const { return *prog_; }

 private:
  void run_forward(const ParamStore& params, const Vec& x, int ndual);
  void run_backward(GradTable& grads);

  const Program* prog_;
  const ParamStore* params_ = nullptr;
  int ndual_ = 0;
  std::vector<Vec> val_;
  std::vector<Mat> dot_;
  std::vector<Vec> bar_;
  std::vector<Mat> dbar_;
};

struct ValueJac {
  Vec value;
  Mat jacobian;
};

ValueJac value_and_jacobian(const Program& prog, const ParamStore& params,
                            const Vec& x);

// Scalar loss over the program output and its input Jacobian. eval returns
// the loss value and fills the adjoint seeds dL/dy and dL/dJ.
class JacobianLoss {
 public:
  virtual ~JacobianLoss() = default;
  virtual double eval(const Vec& y, const Mat& jac, Vec& dl_dy,
                      Mat& dl_djac) const = 0;
};

GradTable param_gradients(const Program& prog, const ParamStore& params,
                          const Vec& x, const JacobianLoss& loss,
                          double* loss_value = nullptr);

// Central differences, step h; test oracle and `check-grad` diagnostic only.
Mat finite_diff_jacobian(const Program& prog, const ParamStore& params,
                         const Vec& x, double h = 1e-5);

// Test hook: scales the analytic tanh derivative by (1 + 1e-3) so gradient
// checks have a negative control. Never set outside check-grad/tests.
void set_corrupt_tanh_derivative(bool enabled);

}  // namespace retrofit::diff
