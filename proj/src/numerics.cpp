#include "misspec/numerics.hpp"

namespace misspec {

std::uint64_t mix64(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream_id) {
  const std::uint64_t a = mix64(seed);
  const std::uint64_t b = mix64(stream_id ^ 0x6a09e667f3bcc909ULL);
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return std::mt19937_64(seq);
}

unsigned& worker_setting() {
  static unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  return workers;
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(make_engine(seed, stream_id)) {}

RngStream RngStream::substream(std::uint64_t child_id) const {
  return RngStream(seed_, mix64(stream_id_ * 0x100000001b3ULL + mix64(child_id)));
}

VectorXd RngStream::normal_vector(Index n) {
  VectorXd v(n);
  for (Index i = 0; i < n; ++i) v(i) = normal();
  return v;
}

GaussianSampler::GaussianSampler(const SymMatrix& cov) {
  if (cov.rows() != cov.cols() || cov.rows() == 0) {
    throw InvalidInput("GaussianSampler: covariance must be square and non-empty");
  }
  if (!cov.allFinite()) throw InvalidInput("GaussianSampler: non-finite covariance");
  Eigen::LLT<MatrixXd> llt(symmetrize(cov));
  if (llt.info() != Eigen::Success) {
    throw DecompositionError("GaussianSampler: covariance is not positive definite");
  }
  factor_ = llt.matrixL();
}

VectorXd GaussianSampler::draw(const VectorXd& mean, RngStream& rng) const {
  if (mean.size() != factor_.rows()) throw InvalidInput("GaussianSampler: mean dimension mismatch");
  return mean + factor_.triangularView<Eigen::Lower>() * rng.normal_vector(mean.size());
}

VectorXd sample_gaussian(const VectorXd& mean, const SymMatrix& cov, RngStream& rng) {
  return GaussianSampler(cov).draw(mean, rng);
}

MomentAccumulator::MomentAccumulator(Index size)
    : mean_(LVector::Zero(size)), m2_(LVector::Zero(size)) {}

void MomentAccumulator::add(const Eigen::Ref<const VectorXd>& sample) {
  if (mean_.size() == 0 && count_ == 0) {
    mean_ = LVector::Zero(sample.size());
    m2_ = LVector::Zero(sample.size());
  }
  if (sample.size() != mean_.size()) throw InvalidInput("MomentAccumulator: size mismatch");
  ++count_;
  const long double n = static_cast<long double>(count_);
  for (Index i = 0; i < sample.size(); ++i) {
    const long double x = sample(i);
    const long double delta = x - mean_(i);
    mean_(i) += delta / n;
    m2_(i) += delta * (x - mean_(i));
  }
}

void MomentAccumulator::merge(const MomentAccumulator& other) {
  if (other.count_ == 0) return;
  if (count_ == 0) {
    *this = other;
    return;
  }
  if (other.size() != size()) throw InvalidInput("MomentAccumulator: size mismatch in merge");
  const long double na = static_cast<long double>(count_);
  const long double nb = static_cast<long double>(other.count_);
  const long double n = na + nb;
  for (Index i = 0; i < size(); ++i) {
    const long double delta = other.mean_(i) - mean_(i);
    mean_(i) += delta * nb / n;
    m2_(i) += other.m2_(i) + delta * delta * na * nb / n;
  }
  count_ += other.count_;
}

VectorXd MomentAccumulator::mean() const { return mean_.cast<double>(); }

VectorXd MomentAccumulator::variance() const {
  if (count_ < 2) return VectorXd::Zero(size());
  return (m2_ / static_cast<long double>(count_ - 1)).cast<double>();
}

VectorXd MomentAccumulator::std_error() const {
  if (count_ < 2) return VectorXd::Zero(size());
  return (variance().array() / static_cast<double>(count_)).sqrt().matrix();
}

unsigned worker_count() { return worker_setting(); }

void set_worker_count(unsigned workers) { worker_setting() = std::max(1u, workers); }

}  // namespace misspec
