#include "ddr/net.hpp"

#include <algorithm>
#include <cmath>

namespace ddr {

namespace {

double uniform_fan_in(Rng& rng, double fan_in) {
  const double a = 1.0 / std::sqrt(fan_in);
  return rng.uniform(-a, a);
}

std::vector<double> weight_init(Rng& rng, std::size_t n, double fan_in, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * uniform_fan_in(rng, fan_in);
  return v;
}

}  // namespace

ConvGeometry ConvGeometry::build(const Icosphere& mesh) {
  ConvGeometry g;
  g.order = mesh.order;
  g.n_vertices = mesh.vertex_count();
  g.mean_edge_angle = ddr::mean_edge_angle(mesh);

  const EdgePseudoCoords pc = edge_pseudo_coords(mesh);
  auto src = std::make_shared<std::vector<int>>();
  auto off = std::make_shared<std::vector<int>>();
  std::vector<double> pseudo;
  src->reserve(g.n_vertices * 7);
  pseudo.reserve(g.n_vertices * 14);
  off->push_back(0);
  for (std::size_t v = 0; v < g.n_vertices; ++v) {
    src->push_back(int(v));  // self edge, pseudo-coordinate (0, 0)
    pseudo.push_back(0.0);
    pseudo.push_back(0.0);
    for (int e = mesh.adj_offsets[v]; e < mesh.adj_offsets[v + 1]; ++e) {
      src->push_back(mesh.adj[e]);
      pseudo.push_back(pc.dtheta[e]);
      pseudo.push_back(pc.dphi[e]);
    }
    off->push_back(int(src->size()));
  }
  g.edge_src = std::move(src);
  g.offsets = std::move(off);
  g.pseudo = Tensor::constant(g.edge_src->size(), 2, pseudo);
  return g;
}

PoolGeometry PoolGeometry::build(const PoolingMap& pm) {
  PoolGeometry g;
  g.n_coarse = pm.coarse_count;
  g.n_fine = icosphere_vertex_count(pm.coarse_order + 1);
  g.gather_fine = std::make_shared<const std::vector<int>>(pm.fine_indices);
  g.pool_offsets = std::make_shared<const std::vector<int>>(pm.offsets);

  std::size_t max_len = 0;
  for (std::size_t i = 0; i < pm.coarse_count; ++i)
    max_len = std::max<std::size_t>(max_len, pm.offsets[i + 1] - pm.offsets[i]);

  for (std::size_t p = 0; p < max_len; ++p) {
    std::vector<std::pair<int, int>> pairs;  // (fine, coarse)
    for (std::size_t i = 0; i < pm.coarse_count; ++i) {
      const int len = pm.offsets[i + 1] - pm.offsets[i];
      if (int(p) < len) pairs.push_back({pm.fine_indices[pm.offsets[i] + p], int(i)});
    }
    std::sort(pairs.begin(), pairs.end());
    auto src = std::make_shared<std::vector<int>>();
    auto off = std::make_shared<std::vector<int>>(g.n_fine + 1, 0);
    for (const auto& [f, c] : pairs) {
      src->push_back(c);
      (*off)[f + 1]++;
    }
    for (std::size_t f = 0; f < g.n_fine; ++f) (*off)[f + 1] += (*off)[f];
    g.slots.push_back({std::move(src), std::move(off)});
  }

  // Adjoint pairing: (fine, coarse, 1/|pool entry|) for every membership.
  std::vector<std::array<int, 2>> pairs;
  std::vector<double> scales;
  for (std::size_t i = 0; i < pm.coarse_count; ++i)
    for (int e = pm.offsets[i]; e < pm.offsets[i + 1]; ++e)
      pairs.push_back({pm.fine_indices[e], int(i)});
  std::sort(pairs.begin(), pairs.end());
  auto src = std::make_shared<std::vector<int>>();
  auto off = std::make_shared<std::vector<int>>(g.n_fine + 1, 0);
  for (const auto& [f, c] : pairs) {
    src->push_back(c);
    scales.push_back(1.0 / double(pm.offsets[c + 1] - pm.offsets[c]));
    (*off)[f + 1]++;
  }
  for (std::size_t f = 0; f < g.n_fine; ++f) (*off)[f + 1] += (*off)[f];
  g.adj_coarse_src = std::move(src);
  g.adj_fine_offsets = std::move(off);
  g.adj_scale = Tensor::constant(scales.size(), 1, scales);
  return g;
}

MoNetKernel make_monet_kernel(std::size_t kernel_size, std::size_t c_in, std::size_t c_out,
                              double edge_angle, Rng& rng) {
  MoNetKernel k;
  for (std::size_t g = 0; g < kernel_size; ++g) {
    const double ang = 2.0 * kPi * double(g) / double(kernel_size);
    k.mu.push_back(Tensor::param(
        1, 2, {edge_angle * std::cos(ang), edge_angle * std::sin(ang)}));
    const double lp = -2.0 * std::log(edge_angle);
    k.log_prec.push_back(Tensor::param(1, 2, {lp, lp}));
    k.weight.push_back(Tensor::param(c_in, c_out, weight_init(rng, c_in * c_out, double(c_in))));
  }
  k.bias = Tensor::param(1, c_out, std::vector<double>(c_out, 0.0));
  return k;
}

Tensor monet_conv(const Tensor& features, const ConvGeometry& geom, const MoNetKernel& kernel) {
  if (features.rows() != geom.n_vertices)
    throw ShapeError("monet_conv: features do not live on this mesh order");
  if (features.cols() != kernel.in_channels())
    throw ShapeError("monet_conv: channel count does not match kernel");

  const Tensor gathered = gather_rows(features, geom.edge_src);
  Tensor acc;
  for (std::size_t g = 0; g < kernel.kernel_size(); ++g) {
    const Tensor d = sub(geom.pseudo, kernel.mu[g]);
    const Tensor q = mul(mul(d, d), exp_t(kernel.log_prec[g]));
    const Tensor w = exp_t(affine(row_sum(q), -0.5, 0.0));  // E x 1 Gaussian mass
    const Tensor num = segment_mean(mul(gathered, w), geom.offsets);
    const Tensor den = segment_mean(w, geom.offsets);
    const Tensor avg = div(num, den);
    const Tensor term = matmul(avg, kernel.weight[g]);
    acc = acc.defined() ? add(acc, term) : term;
  }
  return add(acc, kernel.bias);
}

Tensor hex_mean_pool(const Tensor& fine_features, const PoolGeometry& geom) {
  if (fine_features.rows() != geom.n_fine)
    throw ShapeError("hex_mean_pool: features do not live on the fine mesh");
  return segment_mean(gather_rows(fine_features, geom.gather_fine), geom.pool_offsets);
}

Tensor hex_transpose_upsample(const Tensor& coarse_features, const PoolGeometry& geom,
                              const std::vector<Tensor>& slot_weights) {
  if (coarse_features.rows() != geom.n_coarse)
    throw ShapeError("hex_transpose_upsample: features do not live on the coarse mesh");
  if (slot_weights.size() < geom.slots.size())
    throw ShapeError("hex_transpose_upsample: need one weight matrix per slot");
  Tensor out;
  for (std::size_t p = 0; p < geom.slots.size(); ++p) {
    if (slot_weights[p].rows() != coarse_features.cols())
      throw ShapeError("hex_transpose_upsample: slot weight rows mismatch");
    const Tensor projected = matmul(coarse_features, slot_weights[p]);
    const Tensor scattered =
        segment_sum(gather_rows(projected, geom.slots[p].coarse_src), geom.slots[p].fine_offsets);
    out = out.defined() ? add(out, scattered) : scattered;
  }
  return out;
}

Tensor hex_upsample_adjoint(const Tensor& coarse_features, const PoolGeometry& geom) {
  if (coarse_features.rows() != geom.n_coarse)
    throw ShapeError("hex_upsample_adjoint: features do not live on the coarse mesh");
  const Tensor g = gather_rows(coarse_features, geom.adj_coarse_src);
  return segment_sum(mul(g, geom.adj_scale), geom.adj_fine_offsets);
}

std::shared_ptr<const MeshStack> MeshStack::build(int top_order, double radius) {
  auto stack = std::make_shared<MeshStack>();
  stack->radius = radius;
  for (int k = 0; k <= top_order; ++k) {
    stack->meshes.push_back(build_icosphere(k, radius));
    stack->conv.push_back(ConvGeometry::build(stack->meshes.back()));
    if (k >= 1) stack->pool.push_back(PoolGeometry::build(pooling_map(stack->meshes.back())));
  }
  return stack;
}

std::size_t UNetConfig::stages(int) const {
  return std::size_t(std::min(6, top_order + 1));
}

UNet make_unet(const UNetConfig& cfg, const MeshStack& stack, Rng& rng) {
  if (cfg.top_order < 1) throw ConfigError("unet: data order too low for an encoder-decoder");
  if (cfg.top_order >= int(stack.meshes.size()))
    throw ConfigError("unet: mesh stack does not reach the data order");
  UNet net;
  net.config = cfg;
  net.n_stages = cfg.stages(cfg.top_order);

  auto channels = [&](std::size_t s) { return cfg.c1 << s; };
  for (std::size_t s = 0; s < net.n_stages; ++s) {
    const int order = cfg.top_order - int(s);
    const double ea = stack.conv[order].mean_edge_angle;
    const std::size_t cin = s == 0 ? cfg.in_channels : channels(s - 1);
    net.enc.push_back({make_monet_kernel(3, cin, channels(s), ea, rng),
                       make_monet_kernel(3, channels(s), channels(s), ea, rng)});
  }
  for (std::size_t s = 0; s + 1 < net.n_stages; ++s) {
    const int order = cfg.top_order - int(s);
    const double ea = stack.conv[order].mean_edge_angle;
    std::vector<Tensor> ups;
    for (int p = 0; p < 7; ++p)
      ups.push_back(Tensor::param(
          channels(s + 1), channels(s),
          weight_init(rng, channels(s + 1) * channels(s), double(channels(s + 1)))));
    net.up_weights.push_back(std::move(ups));
    net.dec.push_back({make_monet_kernel(3, 2 * channels(s), channels(s), ea, rng),
                       make_monet_kernel(3, channels(s), channels(s), ea, rng)});
  }
  return net;
}

Tensor unet_forward(const Tensor& input, const UNet& net, const MeshStack& stack) {
  const int top = net.config.top_order;
  if (input.rows() != stack.mesh(top).vertex_count())
    throw ShapeError("unet_forward: input does not live on the data mesh");
  if (input.cols() != net.config.in_channels)
    throw ShapeError("unet_forward: input channel count mismatch");

  std::vector<Tensor> skips;
  Tensor h = input;
  for (std::size_t s = 0; s < net.n_stages; ++s) {
    const int order = top - int(s);
    h = leaky_relu(monet_conv(h, stack.conv[order], net.enc[s][0]), 0.2);
    h = leaky_relu(monet_conv(h, stack.conv[order], net.enc[s][1]), 0.2);
    if (s + 1 < net.n_stages) {
      skips.push_back(h);
      h = hex_mean_pool(h, stack.pool[order - 1]);
    }
  }
  for (std::size_t s = net.n_stages - 1; s-- > 0;) {
    const int order = top - int(s);
    h = hex_transpose_upsample(h, stack.pool[order - 1], net.up_weights[s]);
    h = concat_cols(h, skips[s]);
    h = leaky_relu(monet_conv(h, stack.conv[order], net.dec[s][0]), 0.2);
    h = leaky_relu(monet_conv(h, stack.conv[order], net.dec[s][1]), 0.2);
  }
  return h;
}

namespace {

void append_kernel(std::vector<NamedParam>& out, const std::string& prefix,
                   const MoNetKernel& k) {
  for (std::size_t g = 0; g < k.kernel_size(); ++g) {
    out.push_back({prefix + ".g" + std::to_string(g) + ".mu", k.mu[g]});
    out.push_back({prefix + ".g" + std::to_string(g) + ".log_prec", k.log_prec[g]});
    out.push_back({prefix + ".g" + std::to_string(g) + ".weight", k.weight[g]});
  }
  out.push_back({prefix + ".bias", k.bias});
}

}  // namespace

std::vector<NamedParam> UNet::named_parameters(const std::string& prefix) const {
  std::vector<NamedParam> out;
  for (std::size_t s = 0; s < enc.size(); ++s) {
    append_kernel(out, prefix + "enc." + std::to_string(s) + ".conv0", enc[s][0]);
    append_kernel(out, prefix + "enc." + std::to_string(s) + ".conv1", enc[s][1]);
  }
  for (std::size_t s = 0; s < up_weights.size(); ++s)
    for (std::size_t p = 0; p < up_weights[s].size(); ++p)
      out.push_back({prefix + "up." + std::to_string(s) + ".w" + std::to_string(p),
                     up_weights[s][p]});
  for (std::size_t s = 0; s < dec.size(); ++s) {
    append_kernel(out, prefix + "dec." + std::to_string(s) + ".conv0", dec[s][0]);
    append_kernel(out, prefix + "dec." + std::to_string(s) + ".conv1", dec[s][1]);
  }
  return out;
}

std::vector<Tensor> UNet::parameters() const {
  std::vector<Tensor> out;
  for (const auto& np : named_parameters("")) out.push_back(np.tensor);
  return out;
}

FsnParams make_fsn(std::size_t c_in, const std::vector<std::size_t>& schedule,
                   std::size_t n_labels, double edge_angle, Rng& rng) {
  if (schedule.empty() || schedule.back() != n_labels)
    throw ConfigError("fsn: channel schedule must end at the label count");
  FsnParams fsn;
  std::size_t cin = c_in;
  for (std::size_t c : schedule) {
    fsn.layers.push_back(make_monet_kernel(3, cin, c, edge_angle, rng));
    cin = c;
  }
  return fsn;
}

Tensor fsn_forward(const Tensor& features, const FsnParams& fsn, const ConvGeometry& geom) {
  Tensor h = features;
  for (std::size_t l = 0; l < fsn.layers.size(); ++l) {
    h = monet_conv(h, geom, fsn.layers[l]);
    if (l + 1 < fsn.layers.size()) h = leaky_relu(h, 0.2);
  }
  return h;
}

std::vector<NamedParam> FsnParams::named_parameters(const std::string& prefix) const {
  std::vector<NamedParam> out;
  for (std::size_t l = 0; l < layers.size(); ++l)
    append_kernel(out, prefix + "fsn." + std::to_string(l), layers[l]);
  return out;
}

std::vector<Tensor> FsnParams::parameters() const {
  std::vector<Tensor> out;
  for (const auto& np : named_parameters("")) out.push_back(np.tensor);
  return out;
}

Mat3 rot6d_to_matrix(const std::array<double, 6>& v) {
  const Vec3 a{v[0], v[1], v[2]}, b{v[3], v[4], v[5]};
  const double na = a.norm();
  if (na <= 1e-12) throw NumericError("rot6d: first vector is degenerate");
  const Vec3 r1 = a * (1.0 / na);
  const Vec3 res = b - r1 * b.dot(r1);
  const double nr = res.norm();
  if (nr <= 1e-12) throw NumericError("rot6d: second vector is parallel to the first");
  const Vec3 r2 = res * (1.0 / nr);
  const Vec3 r3 = r1.cross(r2);
  Mat3 R;
  const Vec3 cols[3] = {r1, r2, r3};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) R.m[i][j] = (&cols[j].x)[i];
  return R;
}

namespace {

Tensor permute3(const Tensor& row, const std::vector<int>& order) {
  return reshape(gather_rows(reshape(row, 3, 1), order), 1, 3);
}

Tensor normalize_row(const Tensor& row) {
  return div(row, sqrt_t(row_sum(mul(row, row))));
}

}  // namespace

Tensor rot6d_graph(const Tensor& six) {
  if (six.rows() != 1 || six.cols() != 6) throw ShapeError("rot6d_graph: expected 1x6 input");
  const Tensor cols = reshape(six, 6, 1);
  const Tensor a = reshape(gather_rows(cols, std::vector<int>{0, 1, 2}), 1, 3);
  const Tensor b = reshape(gather_rows(cols, std::vector<int>{3, 4, 5}), 1, 3);
  const Tensor r1 = normalize_row(a);
  const Tensor proj = mul(r1, row_sum(mul(b, r1)));
  const Tensor r2 = normalize_row(sub(b, proj));
  const Tensor r3 = sub(mul(permute3(r1, {1, 2, 0}), permute3(r2, {2, 0, 1})),
                        mul(permute3(r1, {2, 0, 1}), permute3(r2, {1, 2, 0})));
  return concat_rows(concat_rows(r1, r2), r3);
}

RotationHead make_rotation_head(const UNetConfig& cfg, const MeshStack& stack, Rng& rng) {
  RotationHead head;
  head.unet = make_unet(cfg, stack, rng);
  // Small weights and an identity bias keep the initial prediction at the
  // identity rotation; a zero bias would make the 6D decoding degenerate.
  head.dense_w = Tensor::param(cfg.c1, 6, weight_init(rng, 6 * cfg.c1, double(cfg.c1), 0.01));
  head.dense_b = Tensor::param(1, 6, {1, 0, 0, 0, 1, 0});
  return head;
}

Tensor rotation_net_forward(const Tensor& input, const RotationHead& head,
                            const MeshStack& stack) {
  const Tensor h = unet_forward(input, head.unet, stack);
  const Tensor pooled = col_mean(h);
  const Tensor six = linear(pooled, head.dense_w, head.dense_b);

  const double* s = six.data();
  const Vec3 a{s[0], s[1], s[2]};
  const Vec3 b{s[3], s[4], s[5]};
  const double na = a.norm();
  if (na <= 1e-12) throw NumericError("rotation head produced a degenerate 6D vector");
  const Vec3 r1 = a * (1.0 / na);
  if ((b - r1 * b.dot(r1)).norm() <= 1e-12)
    throw NumericError("rotation head produced parallel 6D vectors");
  return rot6d_graph(six);
}

Mat3 tensor_to_rotation(const Tensor& rot_rows) {
  if (rot_rows.rows() != 3 || rot_rows.cols() != 3)
    throw ShapeError("tensor_to_rotation: expected a 3x3 matrix");
  Mat3 R;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) R.m[i][j] = rot_rows.data()[j * 3 + i];
  return R;
}

std::vector<NamedParam> RotationHead::named_parameters(const std::string& prefix) const {
  std::vector<NamedParam> out = unet.named_parameters(prefix + "rot.");
  out.push_back({prefix + "rot.dense.weight", dense_w});
  out.push_back({prefix + "rot.dense.bias", dense_b});
  return out;
}

std::vector<Tensor> RotationHead::parameters() const {
  std::vector<Tensor> out;
  for (const auto& np : named_parameters("")) out.push_back(np.tensor);
  return out;
}

}  // namespace ddr
