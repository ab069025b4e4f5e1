#include "ist/synthdata.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "ist/errors.hpp"
#include "ist/io_util.hpp"

namespace ist::synth {

const char* category_name(Category c) {
  switch (c) {
    case Category::Box: return "box";
    case Category::Cylinder: return "cylinder";
    case Category::BowlLike: return "bowl";
    case Category::MugLike: return "mug";
  }
  return "?";
}

Category category_from_name(const std::string& name) {
  if (name == "box") return Category::Box;
  if (name == "cylinder") return Category::Cylinder;
  if (name == "bowl") return Category::BowlLike;
  if (name == "mug") return Category::MugLike;
  throw UnknownCategory("unknown category '" + name + "'");
}

geo::SymmetrySpec symmetry_for(Category c) {
  if (c == Category::Cylinder || c == Category::BowlLike)
    return geo::SymmetrySpec::about_axis(geo::Vec3::UnitY());
  return geo::SymmetrySpec::none();
}

namespace {

// Unit-parameter surface points, fixed per category so that point indices
// stay aligned across shape seeds; only the aspect varies with the seed.
geo::Points unit_surface(Category cat, std::size_t m) {
  std::mt19937_64 rng(0x5157u + std::uint64_t(cat) * 7919u);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  geo::Points pts(m, 3);
  for (std::size_t i = 0; i < m; ++i) {
    double x = 0, y = 0, z = 0;
    switch (cat) {
      case Category::Box: {
        const int face = int(u(rng) * 6) % 6;
        const double a = u(rng) - 0.5, b = u(rng) - 0.5;
        switch (face) {
          case 0: x = 0.5; y = a; z = b; break;
          case 1: x = -0.5; y = a; z = b; break;
          case 2: y = 0.5; x = a; z = b; break;
          case 3: y = -0.5; x = a; z = b; break;
          case 4: z = 0.5; x = a; y = b; break;
          default: z = -0.5; x = a; y = b; break;
        }
        break;
      }
      case Category::Cylinder: {
        const double sel = u(rng);
        const double phi = 2.0 * M_PI * u(rng);
        if (sel < 0.7) {  // lateral
          x = 0.5 * std::cos(phi);
          z = 0.5 * std::sin(phi);
          y = u(rng) - 0.5;
        } else {  // caps
          const double r = 0.5 * std::sqrt(u(rng));
          x = r * std::cos(phi);
          z = r * std::sin(phi);
          y = sel < 0.85 ? 0.5 : -0.5;
        }
        break;
      }
      case Category::BowlLike: {
        // lower hemisphere shell, open towards +y
        const double phi = 2.0 * M_PI * u(rng);
        y = -0.5 * u(rng);
        const double rho = std::sqrt(std::max(0.0, 0.25 - y * y));
        x = rho * std::cos(phi);
        z = rho * std::sin(phi);
        break;
      }
      case Category::MugLike: {
        const double sel = u(rng);
        const double phi = 2.0 * M_PI * u(rng);
        if (sel < 0.8) {  // body: cylinder shell + caps
          if (sel < 0.65) {
            x = 0.5 * std::cos(phi);
            z = 0.5 * std::sin(phi);
            y = u(rng) - 0.5;
          } else {
            const double r = 0.5 * std::sqrt(u(rng));
            x = r * std::cos(phi);
            z = r * std::sin(phi);
            y = sel < 0.72 ? 0.5 : -0.5;
          }
        } else {  // handle lobe: half torus in the x-y plane
          const double alpha = M_PI * (u(rng) - 0.5);
          const double beta = phi;
          const double ring = 0.22 + 0.05 * std::cos(beta);
          x = 0.5 + ring * std::cos(alpha);
          y = ring * std::sin(alpha);
          z = 0.05 * std::sin(beta);
        }
        break;
      }
    }
    pts.row(i) << x, y, z;
  }
  return pts;
}

geo::Vec3 sample_aspect(Category cat, std::uint64_t seed) {
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + std::uint64_t(cat) + 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto in = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  switch (cat) {
    case Category::Box:
      return {in(0.5, 1.5), in(0.5, 1.5), in(0.5, 1.5)};
    case Category::Cylinder: {
      const double r = in(0.3, 0.8), h = in(0.5, 1.6);
      return {r, h, r};  // x = z keeps the y symmetry
    }
    case Category::BowlLike: {
      const double a = in(0.7, 1.3), b = in(0.5, 1.2);
      return {a, b, a};
    }
    case Category::MugLike: {
      const double r = in(0.6, 1.1), h = in(0.6, 1.4);
      return {r, h, r};
    }
  }
  return {1, 1, 1};
}

}  // namespace

CanonicalShape generate_shape(Category category, std::uint64_t shape_seed,
                              std::size_t model_points) {
  CanonicalShape s;
  s.category = category;
  s.shape_seed = shape_seed;
  s.points = unit_surface(category, model_points);
  const geo::Vec3 aspect = sample_aspect(category, shape_seed);
  for (Eigen::Index i = 0; i < s.points.rows(); ++i)
    s.points.row(i) = s.points.row(i).cwiseProduct(aspect.transpose());
  // center the tight box and normalize its diagonal to 1
  const geo::Vec3 lo = s.points.colwise().minCoeff();
  const geo::Vec3 hi = s.points.colwise().maxCoeff();
  const geo::Vec3 mid = 0.5 * (lo + hi);
  const geo::Vec3 ext = hi - lo;
  const double diag = ext.norm();
  s.points.rowwise() -= mid.transpose();
  s.points /= diag;
  s.extents = ext / diag;
  return s;
}

Instance sample_instance(const CanonicalShape& shape, std::mt19937_64& rng,
                         const SampleConfig& cfg) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Instance inst;
  inst.category = shape.category;
  inst.model = shape.points;

  inst.pose.R = geo::random_rotation(rng);
  for (int k = 0; k < 3; ++k)
    inst.pose.t(k) = cfg.t_min(k) + (cfg.t_max(k) - cfg.t_min(k)) * u(rng);
  const double sn = cfg.scale_min + (cfg.scale_max - cfg.scale_min) * u(rng);
  inst.pose.s = sn * shape.extents;

  // visibility: half-space culling by canonical direction
  std::vector<std::size_t> visible;
  visible.reserve(shape.points.rows());
  if (cfg.partial) {
    geo::Vec3 view;
    std::normal_distribution<double> g(0.0, 1.0);
    do {
      view << g(rng), g(rng), g(rng);
    } while (view.norm() < 1e-9);
    view.normalize();
    for (Eigen::Index i = 0; i < shape.points.rows(); ++i)
      if (shape.points.row(i).dot(view) >= 0) visible.push_back(i);
    if (visible.size() * 4 < cfg.n_points)
      throw InsufficientVisiblePoints("partial view left too few points");
  } else {
    for (Eigen::Index i = 0; i < shape.points.rows(); ++i)
      visible.push_back(i);
  }

  const std::size_t n = cfg.n_points;
  inst.Q_o.resize(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t pick =
        visible[std::min<std::size_t>(visible.size() - 1,
                                      std::size_t(u(rng) * visible.size()))];
    inst.Q_o.row(i) = shape.points.row(pick);
  }
  inst.P_o = geo::camera_from_canonical(inst.Q_o, inst.pose);
  // appearance: deterministic in canonical position, pose-free identity cue
  inst.C_o = inst.Q_o.array() + 0.5;
  if (cfg.noise_sigma > 0) {
    std::normal_distribution<double> g(0.0, cfg.noise_sigma);
    for (Eigen::Index i = 0; i < inst.P_o.rows(); ++i)
      for (int k = 0; k < 3; ++k) inst.P_o(i, k) += g(rng);
  }
  return inst;
}

Instance augment(const Instance& inst, std::mt19937_64& rng,
                 const AugmentConfig& cfg) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Instance out = inst;

  if (cfg.scale_jitter > 0) {
    geo::Vec3 gamma;
    for (int k = 0; k < 3; ++k) gamma(k) = 1.0 + cfg.scale_jitter * u(rng);
    // rescale about the box center in metric canonical coordinates
    const double sn = out.pose.scale_norm();
    geo::Vec3 s2 = out.pose.s.cwiseProduct(gamma);
    const double sn2 = s2.norm();
    for (Eigen::Index i = 0; i < out.P_o.rows(); ++i) {
      geo::Vec3 x = out.pose.R.transpose() *
                    (out.P_o.row(i).transpose() - out.pose.t);
      x = x.cwiseProduct(gamma);
      out.P_o.row(i) = (out.pose.R * x + out.pose.t).transpose();
      geo::Vec3 q = out.Q_o.row(i).transpose() * sn;
      out.Q_o.row(i) = (q.cwiseProduct(gamma) / sn2).transpose();
    }
    for (Eigen::Index i = 0; i < out.model.rows(); ++i) {
      geo::Vec3 q = out.model.row(i).transpose() * sn;
      out.model.row(i) = (q.cwiseProduct(gamma) / sn2).transpose();
    }
    out.pose.s = s2;
  }

  if (cfg.rot_max_deg > 0) {
    std::normal_distribution<double> g(0.0, 1.0);
    geo::Vec3 axis;
    do {
      axis << g(rng), g(rng), g(rng);
    } while (axis.norm() < 1e-9);
    axis.normalize();
    const double ang = cfg.rot_max_deg * M_PI / 180.0 * u(rng);
    const geo::Mat3 Rd = geo::rot_about_axis(axis, ang);
    for (Eigen::Index i = 0; i < out.P_o.rows(); ++i)
      out.P_o.row(i) = (Rd * out.P_o.row(i).transpose()).transpose();
    out.pose.t = Rd * out.pose.t;
    out.pose.R = Rd * out.pose.R;
  }

  if (cfg.trans_max > 0) {
    geo::Vec3 d;
    for (int k = 0; k < 3; ++k) d(k) = cfg.trans_max * u(rng);
    out.P_o.rowwise() += d.transpose();
    out.pose.t += d;
  }

  if (cfg.uniform_noise > 0) {
    for (Eigen::Index i = 0; i < out.P_o.rows(); ++i)
      for (int k = 0; k < 3; ++k)
        out.P_o(i, k) += cfg.uniform_noise * u(rng);
  }
  return out;
}

std::vector<Instance> generate_dataset(const GenConfig& cfg) {
  std::vector<Instance> out;
  out.reserve(cfg.count);
  std::mt19937_64 rng(cfg.seed);
  SampleConfig sc;
  sc.n_points = cfg.n_points;
  sc.noise_sigma = cfg.noise_sigma;
  sc.partial = cfg.partial;
  const std::size_t ncat = cfg.categories.size();
  for (std::size_t i = 0; i < cfg.count; ++i) {
    const Category cat = cfg.categories[i % ncat];  // balanced within one
    const std::uint64_t shape_seed = cfg.seed * 1000003ull + i;
    const CanonicalShape shape =
        generate_shape(cat, shape_seed, cfg.model_points);
    out.push_back(sample_instance(shape, rng, sc));
  }
  return out;
}

// ---- snapshot i/o --------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'I', 'S', 'T', 'D'};
constexpr std::uint32_t kVersion = 1;

void put_f32(std::vector<std::uint8_t>& buf, double v) {
  float f = float(v);
  std::uint8_t b[4];
  std::memcpy(b, &f, 4);
  buf.insert(buf.end(), b, b + 4);
}
void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
  std::uint8_t b[4];
  std::memcpy(b, &v, 4);
  buf.insert(buf.end(), b, b + 4);
}

struct Reader {
  const std::uint8_t* p;
  const std::uint8_t* end;
  float f32() {
    if (p + 4 > end) throw ChecksumMismatch("snapshot: truncated record");
    float f;
    std::memcpy(&f, p, 4);
    p += 4;
    return f;
  }
  std::uint32_t u32() {
    if (p + 4 > end) throw ChecksumMismatch("snapshot: truncated record");
    std::uint32_t v;
    std::memcpy(&v, p, 4);
    p += 4;
    return v;
  }
};

}  // namespace

void write_snapshot(const std::vector<Instance>& instances,
                    const std::string& path) {
  const std::size_t n_pts = instances.empty() ? 0 : instances[0].P_o.rows();
  std::vector<std::uint8_t> buf;
  buf.insert(buf.end(), kMagic, kMagic + 4);
  put_u32(buf, kVersion);
  put_u32(buf, std::uint32_t(instances.size()));
  put_u32(buf, std::uint32_t(n_pts));
  for (const auto& inst : instances) {
    if (std::size_t(inst.P_o.rows()) != n_pts)
      throw IoFailure("snapshot: inconsistent point counts");
    auto put_pts = [&](const geo::Points& m) {
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (int k = 0; k < 3; ++k) put_f32(buf, m(i, k));
    };
    put_pts(inst.P_o);
    put_pts(inst.C_o);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) put_f32(buf, inst.pose.R(i, j));
    for (int k = 0; k < 3; ++k) put_f32(buf, inst.pose.t(k));
    for (int k = 0; k < 3; ++k) put_f32(buf, inst.pose.s(k));
    put_u32(buf, std::uint32_t(inst.category));
    put_pts(inst.Q_o);
  }
  put_u32(buf, io::crc32(buf.data(), buf.size()));
  io::write_file_atomic(path, buf);
}

std::vector<Instance> read_snapshot(const std::string& path) {
  std::vector<std::uint8_t> buf = io::read_file(path);
  if (buf.size() < 20) throw ChecksumMismatch("snapshot: file too short");
  if (std::memcmp(buf.data(), kMagic, 4) != 0)
    throw FormatVersionMismatch("snapshot: bad magic bytes");
  std::uint32_t stored;
  std::memcpy(&stored, buf.data() + buf.size() - 4, 4);
  if (io::crc32(buf.data(), buf.size() - 4) != stored)
    throw ChecksumMismatch("snapshot: CRC mismatch");
  Reader r{buf.data() + 4, buf.data() + buf.size() - 4};
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw FormatVersionMismatch("snapshot: unsupported version " +
                                std::to_string(version));
  const std::uint32_t count = r.u32();
  const std::uint32_t n_pts = r.u32();
  std::vector<Instance> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Instance inst;
    auto get_pts = [&](geo::Points& m) {
      m.resize(n_pts, 3);
      for (std::uint32_t j = 0; j < n_pts; ++j)
        for (int k = 0; k < 3; ++k) m(j, k) = r.f32();
    };
    get_pts(inst.P_o);
    get_pts(inst.C_o);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) inst.pose.R(a, b) = r.f32();
    for (int k = 0; k < 3; ++k) inst.pose.t(k) = r.f32();
    for (int k = 0; k < 3; ++k) inst.pose.s(k) = r.f32();
    inst.category = Category(r.u32());
    get_pts(inst.Q_o);
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace ist::synth
