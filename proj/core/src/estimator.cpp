#include "gridcoord/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "gridcoord/error.hpp"

namespace gridcoord::estimator {

namespace {

void check_sample(const MeasurementSample& s, std::size_t n_o) {
  if (s.p_o.size() != n_o || s.q_o.size() != n_o || s.y_o.size() != n_o)
    throw Error(ErrorKind::DimensionMismatch, "measurement sample does not match the observable set");
}

// psi and u for one sample.
void regression_terms(const MeasurementSample& s, const feeder::PartitionedBlocks& pb, std::vector<double>& psi,
                      std::vector<double>& u) {
  const std::size_t no = pb.n_o(), nu = pb.n_u();
  check_sample(s, no);
  const auto rp = pb.roo * std::span<const double>(s.p_o);
  const auto xq = pb.xoo * std::span<const double>(s.q_o);
  const auto ky = pb.koo * std::span<const double>(s.y_o);
  psi.resize(no);
  for (std::size_t i = 0; i < no; ++i) psi[i] = rp[i] + xq[i] - s.y_o[i] - ky[i];
  u.assign(nu, 0.0);
  if (nu == 0) return;
  const auto a = pb.ruo * std::span<const double>(s.p_o);
  const auto b = pb.xuo * std::span<const double>(s.q_o);
  const auto c = pb.kuo * std::span<const double>(s.y_o);
  for (std::size_t i = 0; i < nu; ++i) u[i] = a[i] + b[i] - c[i];
}

}  // namespace

RlsState init_state(const feeder::PartitionedBlocks& pb, const MeasurementSample& first, const RlsOptions& opt) {
  if (!(opt.lambda > 0.0 && opt.lambda <= 1.0))
    throw Error(ErrorKind::ValidationError, "forgetting factor must lie in (0, 1]");
  if (!(opt.p0_scale > 0.0)) throw Error(ErrorKind::ValidationError, "initial covariance scale must be positive");
  std::vector<double> psi, u;
  regression_terms(first, pb, psi, u);
  RlsState st;
  st.n_o = pb.n_o();
  st.n_u = pb.n_u();
  st.lambda = opt.lambda;
  const std::size_t dim = st.n_o * st.n_u + st.n_o;
  st.theta.assign(dim, 0.0);
  // with K1 = 0 the model reads psi = -C2
  for (std::size_t i = 0; i < st.n_o; ++i) st.theta[st.n_o * st.n_u + i] = -psi[i];
  st.cov = Matrix::identity(dim);
  st.cov *= opt.p0_scale;
  st.samples = 1;
  return st;
}

Regressor build_regressor(const MeasurementSample& s, const feeder::PartitionedBlocks& pb) {
  Regressor r;
  std::vector<double> u;
  regression_terms(s, pb, r.psi, u);
  const std::size_t no = pb.n_o(), nu = pb.n_u();
  r.phi = Matrix(no, no * nu + no);
  for (std::size_t j = 0; j < nu; ++j)
    for (std::size_t i = 0; i < no; ++i) r.phi(i, j * no + i) = u[j];
  for (std::size_t i = 0; i < no; ++i) r.phi(i, no * nu + i) = -1.0;
  return r;
}

void rls_update(RlsState& st, const Regressor& r) {
  const std::size_t dim = st.theta.size();
  if (r.phi.cols() != dim || r.phi.rows() != r.psi.size() || st.cov.rows() != dim)
    throw Error(ErrorKind::DimensionMismatch, "regressor does not match the estimator state");
  const Matrix pht = st.cov * r.phi.transposed();             // dim x n_o
  Matrix innov = r.phi * pht;                                  // n_o x n_o
  for (std::size_t i = 0; i < innov.rows(); ++i) innov(i, i) += st.lambda;
  Matrix gain;
  try {
    // gain = P Phi^T S^{-1}  <=>  S^T gain^T = (P Phi^T)^T
    gain = numkit::solve_linear(innov.transposed(), pht.transposed()).transposed();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::SingularMatrix) throw Error(ErrorKind::SingularInnovation, "innovation matrix is singular");
    throw;
  }
  const auto err = residual(st, r);
  const auto step = gain * std::span<const double>(err);
  for (std::size_t i = 0; i < dim; ++i) st.theta[i] += step[i];
  Matrix next = st.cov - gain * (r.phi * st.cov);
  next *= 1.0 / st.lambda;
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = i + 1; j < dim; ++j) {
      const double avg = 0.5 * (next(i, j) + next(j, i));
      next(i, j) = next(j, i) = avg;
    }
  st.cov = std::move(next);
  ++st.samples;
}

std::vector<double> residual(const RlsState& st, const Regressor& r) {
  const auto fit = r.phi * std::span<const double>(st.theta);
  std::vector<double> out(r.psi.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = r.psi[i] - fit[i];
  return out;
}

feeder::Coupling extract_params(const RlsState& st) {
  feeder::Coupling c;
  c.k1 = Matrix(st.n_o, st.n_u);
  for (std::size_t j = 0; j < st.n_u; ++j)
    for (std::size_t i = 0; i < st.n_o; ++i) c.k1(i, j) = st.theta[j * st.n_o + i];
  c.c2.assign(st.theta.begin() + static_cast<long>(st.n_o * st.n_u), st.theta.end());
  return c;
}

std::vector<double> pack_params(const feeder::Coupling& c) {
  auto theta = numkit::vec(c.k1).to_vector();
  theta.insert(theta.end(), c.c2.begin(), c.c2.end());
  return theta;
}

std::vector<MeasurementSample> load_measurements(const std::filesystem::path& path, const feeder::FeederModel& model,
                                                 const feeder::ObservablePartition& partition) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ParseError, path.string() + ": cannot open file");
  const std::size_t no = partition.observable.size();
  std::map<std::size_t, std::size_t> pos;
  for (std::size_t i = 0; i < no; ++i) pos[partition.observable[i]] = i;

  std::vector<MeasurementSample> out;
  std::vector<std::vector<bool>> seen;
  std::map<double, std::size_t> by_time;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::vector<std::string> f;
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      cell.erase(0, cell.find_first_not_of(" \t\r"));
      cell.erase(cell.find_last_not_of(" \t\r") + 1);
      f.push_back(cell);
    }
    const auto where = path.string() + ":" + std::to_string(lineno);
    if (f.size() != 5) throw Error(ErrorKind::ParseError, where + ": expected 5 fields");
    if (lineno == 1 && f[0] == "t") continue;
    double t, p, q, y;
    try {
      t = std::stod(f[0]);
      p = std::stod(f[2]);
      q = std::stod(f[3]);
      y = std::stod(f[4]);
    } catch (const std::exception&) {
      throw Error(ErrorKind::ParseError, where + ": malformed number");
    }
    const auto node = model.node_index(f[1]);
    if (!node || !pos.count(*node)) throw Error(ErrorKind::ParseError, where + ": '" + f[1] + "' is not an observable node");
    auto [it, fresh] = by_time.emplace(t, out.size());
    if (fresh) {
      out.push_back({t, std::vector<double>(no, 0.0), std::vector<double>(no, 0.0), std::vector<double>(no, 0.0)});
      seen.emplace_back(no, false);
    }
    const std::size_t k = pos[*node];
    auto& s = out[it->second];
    s.p_o[k] = p;
    s.q_o[k] = q;
    s.y_o[k] = y;
    seen[it->second][k] = true;
  }
  for (std::size_t i = 0; i < out.size(); ++i)
    if (std::find(seen[i].begin(), seen[i].end(), false) != seen[i].end())
      throw Error(ErrorKind::DimensionMismatch, "sample at t=" + std::to_string(out[i].t) + " misses observable nodes");
  return out;
}

}  // namespace gridcoord::estimator
