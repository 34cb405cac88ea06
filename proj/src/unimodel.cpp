#include "hiertask/unimodel.hpp"

#include <cmath>
#include <limits>

namespace hiertask {

// ============================================================================
// Layout and initialization
// ============================================================================

ParamLayout::ParamLayout(const Hyperparams& hp, int vocabSize) {
  auto add = [&](std::string name, int rows, int cols) {
    Block b{std::move(name), rows, cols, total};
    total += b.size();
    blocks.push_back(std::move(b));
    return static_cast<int>(blocks.size()) - 1;
  };
  const int d = hp.d;
  wordEmb = add("word_emb", d, vocabSize);
  posEmb = add("pos_emb", d, hp.maxLen);
  segEmb = add("seg_emb", d, kNumSegments);
  rotEmb = add("rot_emb", d, 4);
  horEmb = add("hor_emb", d, kNumHorizons);
  visW = add("vis_w", d, kPositionFeatures);
  visB = add("vis_b", d, 1);
  for (int l = 0; l < hp.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    LayerBlocks b{};
    b.ln1g = add(p + "ln1_g", d, 1);
    b.ln1b = add(p + "ln1_b", d, 1);
    b.wq = add(p + "wq", d, d);
    b.bq = add(p + "bq", d, 1);
    b.wk = add(p + "wk", d, d);
    b.bk = add(p + "bk", d, 1);
    b.wv = add(p + "wv", d, d);
    b.bv = add(p + "bv", d, 1);
    b.wo = add(p + "wo", d, d);
    b.bo = add(p + "bo", d, 1);
    b.ln2g = add(p + "ln2_g", d, 1);
    b.ln2b = add(p + "ln2_b", d, 1);
    b.w1 = add(p + "w1", hp.ffn, d);
    b.b1 = add(p + "b1", hp.ffn, 1);
    b.w2 = add(p + "w2", d, hp.ffn);
    b.b2 = add(p + "b2", d, 1);
    layers.push_back(b);
  }
  lnfg = add("lnf_g", d, 1);
  lnfb = add("lnf_b", d, 1);
  sgTypeW = add("sg_type_w", kNumSubGoalTypes, d);
  sgTypeB = add("sg_type_b", kNumSubGoalTypes, 1);
  sgArgW = add("sg_arg_w", kNumArgs, d);
  sgArgB = add("sg_arg_b", kNumArgs, 1);
  actTypeW = add("act_type_w", kNumActTypes, d);
  actTypeB = add("act_type_b", kNumActTypes, 1);
  actArgW = add("act_arg_w", kNumArgs, d);
  actArgB = add("act_arg_b", kNumArgs, 1);
  ptrW = add("ptr_w", d, d);
  ptrU = add("ptr_u", d, 1);
  ptrB = add("ptr_b", 1, 1);
}

int ParamLayout::find(std::string_view name) const {
  for (size_t i = 0; i < blocks.size(); ++i)
    if (blocks[i].name == name) return static_cast<int>(i);
  throw std::out_of_range("no parameter block " + std::string(name));
}

template <typename Scalar>
ModelParams<Scalar> init_params(const Hyperparams& hp, int vocabSize, uint64_t seed) {
  hp.validate();
  ModelParams<Scalar> p;
  p.hp = hp;
  p.vocabSize = vocabSize;
  p.layout = ParamLayout(hp, vocabSize);
  p.theta = VectorX<Scalar>::Zero(p.layout.total);
  Rng rng(derive_seed(seed, 0x696e6974ull));
  auto normal = [&](int b, double sd) {
    auto m = p.block(b);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<Scalar>(sd * rng.normal());
  };
  const auto& L = p.layout;
  const double fan = 1.0 / std::sqrt(static_cast<double>(hp.d));
  const double resid = fan / std::sqrt(2.0 * hp.layers);
  for (int b : {L.wordEmb, L.posEmb, L.segEmb, L.rotEmb, L.horEmb}) normal(b, 0.1);
  normal(L.visW, 1.0 / std::sqrt(static_cast<double>(kPositionFeatures)));
  for (const auto& l : L.layers) {
    p.block(l.ln1g).setOnes();
    p.block(l.ln2g).setOnes();
    normal(l.wq, fan);
    normal(l.wk, fan);
    normal(l.wv, fan);
    normal(l.wo, resid);
    normal(l.w1, fan);
    normal(l.w2, resid / std::sqrt(static_cast<double>(hp.ffn) / hp.d));
  }
  p.block(L.lnfg).setOnes();
  for (int b : {L.sgTypeW, L.sgArgW, L.actTypeW, L.actArgW}) normal(b, fan);
  normal(L.ptrW, fan);
  normal(L.ptrU, fan);
  return p;
}

// ============================================================================
// Forward and backward
// ============================================================================

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

template <typename S>
S gelu(S x) {
  const S t = std::tanh(static_cast<S>(kGeluC) * (x + static_cast<S>(0.044715) * x * x * x));
  return static_cast<S>(0.5) * x * (1 + t);
}

template <typename S>
S gelu_grad(S x) {
  const S u = static_cast<S>(kGeluC) * (x + static_cast<S>(0.044715) * x * x * x);
  const S t = std::tanh(u);
  const S du = static_cast<S>(kGeluC) * (1 + static_cast<S>(3 * 0.044715) * x * x);
  return static_cast<S>(0.5) * (1 + t) + static_cast<S>(0.5) * x * (1 - t * t) * du;
}

/// Column-wise layer norm. Writes normalized values and reciprocal std.
template <typename S>
void layer_norm(const MatrixX<S>& x, MatrixX<S>& xhat, VectorX<S>& rstd) {
  const Eigen::Index d = x.rows();
  xhat.resize(d, x.cols());
  rstd.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const S mu = x.col(j).mean();
    xhat.col(j) = x.col(j).array() - mu;
    const S var = xhat.col(j).squaredNorm() / static_cast<S>(d);
    rstd(j) = static_cast<S>(1) / std::sqrt(var + static_cast<S>(kLnEps));
    xhat.col(j) *= rstd(j);
  }
}

template <typename S>
MatrixX<S> layer_norm_back(const MatrixX<S>& dxhat, const MatrixX<S>& xhat, const VectorX<S>& rstd) {
  MatrixX<S> dx(dxhat.rows(), dxhat.cols());
  const S invD = static_cast<S>(1) / static_cast<S>(dxhat.rows());
  for (Eigen::Index j = 0; j < dxhat.cols(); ++j) {
    const S m1 = dxhat.col(j).sum() * invD;
    const S m2 = dxhat.col(j).dot(xhat.col(j)) * invD;
    dx.col(j) = rstd(j) * (dxhat.col(j).array() - m1 - xhat.col(j).array() * m2);
  }
  return dx;
}

template <typename S>
void softmax_inplace(Eigen::Ref<VectorX<S>> v) {
  const S m = v.maxCoeff();
  S z = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    v(i) = std::isinf(v(i)) && v(i) < 0 ? S(0) : std::exp(v(i) - m);
    z += v(i);
  }
  v /= z;
}

template <typename S>
VectorX<S> softmax(const VectorX<S>& v) {
  VectorX<S> out = v;
  softmax_inplace<S>(out);
  return out;
}

template <typename S>
S cross_entropy(const VectorX<S>& logits, int y, const char* head) {
  if (y < 0 || y >= logits.size()) throw LabelError(std::string("label out of range for head ") + head);
  if (std::isinf(logits(y))) throw LabelError(std::string("label is masked out for head ") + head);
  const S m = logits.maxCoeff();
  S z = 0;
  for (Eigen::Index i = 0; i < logits.size(); ++i)
    if (!std::isinf(logits(i))) z += std::exp(logits(i) - m);
  return m + std::log(z) - logits(y);
}

template <typename S>
struct LayerCache {
  MatrixX<S> xin, xhat1, a, q, k, v, o, x1, xhat2, b, h, g;
  VectorX<S> rs1, rs2;
  std::vector<MatrixX<S>> probs;  // [seq * heads + head], T x T, column = query
};

template <typename S>
struct Forward {
  const ModelParams<S>& p;
  const std::vector<const TokenSeq*>& batch;
  std::vector<Eigen::Index> start;
  Eigen::Index n = 0;
  std::vector<LayerCache<S>> layers;
  MatrixX<S> xhatf, z;
  VectorX<S> rsf;
  std::vector<HeadLogits<S>> out;

  Forward(const ModelParams<S>& params, const std::vector<const TokenSeq*>& b) : p(params), batch(b) {
    for (const TokenSeq* s : batch) {
      start.push_back(n);
      n += s->length();
    }
  }

  MatrixX<S> embed() const {
    const auto& L = p.layout;
    const auto E = p.block(L.wordEmb);
    const auto P = p.block(L.posEmb);
    const auto Sg = p.block(L.segEmb);
    const auto R = p.block(L.rotEmb);
    const auto H = p.block(L.horEmb);
    const auto W = p.block(L.visW);
    const auto B = p.block(L.visB);
    MatrixX<S> x = MatrixX<S>::Zero(p.hp.d, n);
    for (size_t s = 0; s < batch.size(); ++s) {
      for (int t = 0; t < batch[s]->length(); ++t) {
        const Token& tok = batch[s]->tokens[static_cast<size_t>(t)];
        auto col = x.col(start[s] + t);
        for (int w = 0; w < tok.nWords; ++w) col += E.col(tok.words[static_cast<size_t>(w)]);
        col += Sg.col(static_cast<int>(tok.segment));
        if (tok.position >= 0) col += P.col(tok.position);
        if (tok.kind == TokenKind::Vision) {
          Eigen::Matrix<S, kPositionFeatures, 1> f;
          for (int i = 0; i < kPositionFeatures; ++i) f(i) = static_cast<S>(tok.feat[static_cast<size_t>(i)]);
          col += W * f + B.col(0);
        }
        if (tok.kind == TokenKind::Posture) col += R.col(tok.rot) + H.col(tok.horizon);
      }
    }
    return x;
  }

  void run() {
    const auto& L = p.layout;
    const int d = p.hp.d;
    const int nh = p.hp.heads;
    const int dh = d / nh;
    const S scale = static_cast<S>(1) / std::sqrt(static_cast<S>(dh));
    MatrixX<S> x = embed();
    layers.resize(L.layers.size());
    for (size_t l = 0; l < L.layers.size(); ++l) {
      const LayerBlocks& lb = L.layers[l];
      LayerCache<S>& c = layers[l];
      c.xin = x;
      layer_norm<S>(c.xin, c.xhat1, c.rs1);
      c.a = (c.xhat1.array().colwise() * p.block(lb.ln1g).col(0).array()).colwise() +
            p.block(lb.ln1b).col(0).array();
      c.q = (p.block(lb.wq) * c.a).colwise() + p.block(lb.bq).col(0);
      c.k = (p.block(lb.wk) * c.a).colwise() + p.block(lb.bk).col(0);
      c.v = (p.block(lb.wv) * c.a).colwise() + p.block(lb.bv).col(0);
      c.o.resize(d, n);
      c.probs.resize(batch.size() * static_cast<size_t>(nh));
      for (size_t s = 0; s < batch.size(); ++s) {
        const Eigen::Index st = start[s];
        const Eigen::Index T = batch[s]->length();
        for (int h = 0; h < nh; ++h) {
          MatrixX<S>& P = c.probs[s * static_cast<size_t>(nh) + static_cast<size_t>(h)];
          P.noalias() = c.k.block(h * dh, st, dh, T).transpose() * c.q.block(h * dh, st, dh, T);
          P *= scale;
          for (Eigen::Index j = 0; j < T; ++j) softmax_inplace<S>(P.col(j));
          c.o.block(h * dh, st, dh, T).noalias() = c.v.block(h * dh, st, dh, T) * P;
        }
      }
      c.x1 = c.xin + ((p.block(lb.wo) * c.o).colwise() + p.block(lb.bo).col(0));
      layer_norm<S>(c.x1, c.xhat2, c.rs2);
      c.b = (c.xhat2.array().colwise() * p.block(lb.ln2g).col(0).array()).colwise() +
            p.block(lb.ln2b).col(0).array();
      c.h = (p.block(lb.w1) * c.b).colwise() + p.block(lb.b1).col(0);
      c.g = c.h.unaryExpr([](S v) { return gelu(v); });
      x = c.x1 + ((p.block(lb.w2) * c.g).colwise() + p.block(lb.b2).col(0));
    }
    layer_norm<S>(x, xhatf, rsf);
    z = (xhatf.array().colwise() * p.block(L.lnfg).col(0).array()).colwise() + p.block(L.lnfb).col(0).array();

    const S inf = std::numeric_limits<S>::infinity();
    const S ptrScale = static_cast<S>(1) / std::sqrt(static_cast<S>(d));
    out.resize(batch.size());
    for (size_t s = 0; s < batch.size(); ++s) {
      const TokenSeq& seq = *batch[s];
      const VectorX<S> h0 = z.col(start[s]);
      HeadLogits<S>& o = out[s];
      o.sgType = p.block(L.sgTypeW) * h0 + p.block(L.sgTypeB).col(0);
      o.sgArg = p.block(L.sgArgW) * h0 + p.block(L.sgArgB).col(0);
      o.actType = p.block(L.actTypeW) * h0 + p.block(L.actTypeB).col(0);
      if (seq.subProblem == SubProblem::Navigation) o.actType.tail(kNumManipTypes).setConstant(-inf);
      if (seq.subProblem == SubProblem::Manipulation) o.actType.head(kNumNavTypes).setConstant(-inf);
      o.actArg = p.block(L.actArgW) * h0 + p.block(L.actArgB).col(0);
      const VectorX<S> q = p.block(L.ptrW) * h0;
      o.mask.resize(1 + seq.nVision);
      o.mask(0) = q.dot(p.block(L.ptrU).col(0)) * ptrScale + p.block(L.ptrB)(0, 0);
      for (int k = 0; k < seq.nVision; ++k) o.mask(1 + k) = q.dot(z.col(start[s] + seq.visionStart + k)) * ptrScale;
    }
  }

  // Gradient of sum_i w * loss_i.
  void backward(const std::vector<Labels>& labels, S w, VectorX<S>& grad) const {
    const auto& L = p.layout;
    const int d = p.hp.d;
    const int nh = p.hp.heads;
    const int dh = d / nh;
    const S scale = static_cast<S>(1) / std::sqrt(static_cast<S>(dh));
    const S ptrScale = static_cast<S>(1) / std::sqrt(static_cast<S>(d));
    auto G = [&](int b) {
      const auto& k = L.blocks[static_cast<size_t>(b)];
      return Eigen::Map<MatrixX<S>>(grad.data() + k.offset, k.rows, k.cols);
    };

    MatrixX<S> dz = MatrixX<S>::Zero(d, n);
    auto onehot_grad = [&](const VectorX<S>& logits, int y) {
      VectorX<S> g = softmax<S>(logits);
      g(y) -= 1;
      return VectorX<S>(g * w);
    };
    for (size_t s = 0; s < batch.size(); ++s) {
      const TokenSeq& seq = *batch[s];
      const HeadLogits<S>& o = out[s];
      const Labels& y = labels[s];
      const VectorX<S> h0 = z.col(start[s]);
      VectorX<S> dh0 = VectorX<S>::Zero(d);
      auto linear_head = [&](int wb, int bb, const VectorX<S>& dl) {
        G(wb).noalias() += dl * h0.transpose();
        G(bb).col(0) += dl;
        dh0.noalias() += p.block(wb).transpose() * dl;
      };
      switch (seq.subProblem) {
        case SubProblem::SubGoalPlanning:
          linear_head(L.sgTypeW, L.sgTypeB, onehot_grad(o.sgType, y.sgType));
          linear_head(L.sgArgW, L.sgArgB, onehot_grad(o.sgArg, y.sgArg));
          break;
        case SubProblem::Navigation:
          linear_head(L.actTypeW, L.actTypeB, onehot_grad(o.actType, y.actType));
          break;
        case SubProblem::Manipulation: {
          linear_head(L.actTypeW, L.actTypeB, onehot_grad(o.actType, y.actType));
          linear_head(L.actArgW, L.actArgB, onehot_grad(o.actArg, y.actArg));
          const VectorX<S> ds = onehot_grad(o.mask, y.mask);
          const VectorX<S> q = p.block(L.ptrW) * h0;
          const auto u = p.block(L.ptrU).col(0);
          VectorX<S> dq = ds(0) * ptrScale * u;
          G(L.ptrU).col(0) += ds(0) * ptrScale * q;
          G(L.ptrB)(0, 0) += ds(0);
          for (int k = 0; k < seq.nVision; ++k) {
            const Eigen::Index col = start[s] + seq.visionStart + k;
            dq += ds(1 + k) * ptrScale * z.col(col);
            dz.col(col) += ds(1 + k) * ptrScale * q;
          }
          G(L.ptrW).noalias() += dq * h0.transpose();
          dh0.noalias() += p.block(L.ptrW).transpose() * dq;
          break;
        }
      }
      dz.col(start[s]) += dh0;
    }

    // final layer norm
    G(L.lnfg).col(0) += (dz.array() * xhatf.array()).rowwise().sum().matrix();
    G(L.lnfb).col(0) += dz.rowwise().sum();
    MatrixX<S> dx = layer_norm_back<S>(dz.array().colwise() * p.block(L.lnfg).col(0).array(), xhatf, rsf);

    for (size_t li = L.layers.size(); li-- > 0;) {
      const LayerBlocks& lb = L.layers[li];
      const LayerCache<S>& c = layers[li];
      // feed-forward residual branch
      G(lb.w2).noalias() += dx * c.g.transpose();
      G(lb.b2).col(0) += dx.rowwise().sum();
      const MatrixX<S> dhid =
          (p.block(lb.w2).transpose() * dx).array() * c.h.unaryExpr([](S v) { return gelu_grad(v); }).array();
      G(lb.w1).noalias() += dhid * c.b.transpose();
      G(lb.b1).col(0) += dhid.rowwise().sum();
      const MatrixX<S> db = p.block(lb.w1).transpose() * dhid;
      G(lb.ln2g).col(0) += (db.array() * c.xhat2.array()).rowwise().sum().matrix();
      G(lb.ln2b).col(0) += db.rowwise().sum();
      const MatrixX<S> dx1 =
          dx + layer_norm_back<S>(db.array().colwise() * p.block(lb.ln2g).col(0).array(), c.xhat2, c.rs2);

      // attention residual branch
      G(lb.wo).noalias() += dx1 * c.o.transpose();
      G(lb.bo).col(0) += dx1.rowwise().sum();
      const MatrixX<S> dO = p.block(lb.wo).transpose() * dx1;
      MatrixX<S> dq(d, n), dk(d, n), dv(d, n);
      for (size_t s = 0; s < batch.size(); ++s) {
        const Eigen::Index st = start[s];
        const Eigen::Index T = batch[s]->length();
        for (int h = 0; h < nh; ++h) {
          const MatrixX<S>& P = c.probs[s * static_cast<size_t>(nh) + static_cast<size_t>(h)];
          const auto dOh = dO.block(h * dh, st, dh, T);
          dv.block(h * dh, st, dh, T).noalias() = dOh * P.transpose();
          MatrixX<S> dP = c.v.block(h * dh, st, dh, T).transpose() * dOh;
          // softmax backward, column-wise
          const Eigen::Matrix<S, 1, Eigen::Dynamic> colDot = (P.array() * dP.array()).colwise().sum();
          MatrixX<S> dS = (P.array() * (dP.array().rowwise() - colDot.array())).matrix() * scale;
          dq.block(h * dh, st, dh, T).noalias() = c.k.block(h * dh, st, dh, T) * dS;
          dk.block(h * dh, st, dh, T).noalias() = c.q.block(h * dh, st, dh, T) * dS.transpose();
        }
      }
      G(lb.wq).noalias() += dq * c.a.transpose();
      G(lb.wk).noalias() += dk * c.a.transpose();
      G(lb.wv).noalias() += dv * c.a.transpose();
      G(lb.bq).col(0) += dq.rowwise().sum();
      G(lb.bk).col(0) += dk.rowwise().sum();
      G(lb.bv).col(0) += dv.rowwise().sum();
      MatrixX<S> da = p.block(lb.wq).transpose() * dq;
      da.noalias() += p.block(lb.wk).transpose() * dk;
      da.noalias() += p.block(lb.wv).transpose() * dv;
      G(lb.ln1g).col(0) += (da.array() * c.xhat1.array()).rowwise().sum().matrix();
      G(lb.ln1b).col(0) += da.rowwise().sum();
      dx = dx1 + layer_norm_back<S>(da.array().colwise() * p.block(lb.ln1g).col(0).array(), c.xhat1, c.rs1);
    }

    // embeddings
    auto dE = G(L.wordEmb);
    auto dP = G(L.posEmb);
    auto dSg = G(L.segEmb);
    auto dR = G(L.rotEmb);
    auto dH = G(L.horEmb);
    auto dW = G(L.visW);
    auto dB = G(L.visB);
    for (size_t s = 0; s < batch.size(); ++s) {
      for (int t = 0; t < batch[s]->length(); ++t) {
        const Token& tok = batch[s]->tokens[static_cast<size_t>(t)];
        const auto col = dx.col(start[s] + t);
        for (int wi = 0; wi < tok.nWords; ++wi) dE.col(tok.words[static_cast<size_t>(wi)]) += col;
        dSg.col(static_cast<int>(tok.segment)) += col;
        if (tok.position >= 0) dP.col(tok.position) += col;
        if (tok.kind == TokenKind::Vision) {
          Eigen::Matrix<S, kPositionFeatures, 1> f;
          for (int i = 0; i < kPositionFeatures; ++i) f(i) = static_cast<S>(tok.feat[static_cast<size_t>(i)]);
          dW.noalias() += col * f.transpose();
          dB.col(0) += col;
        }
        if (tok.kind == TokenKind::Posture) {
          dR.col(tok.rot) += col;
          dH.col(tok.horizon) += col;
        }
      }
    }
  }
};

}  // namespace

template <typename Scalar>
std::vector<HeadLogits<Scalar>> forward(const ModelParams<Scalar>& p, const std::vector<const TokenSeq*>& batch) {
  if (batch.empty()) return {};
  Forward<Scalar> f(p, batch);
  f.run();
  return std::move(f.out);
}

template <typename Scalar>
HeadLogits<Scalar> forward(const ModelParams<Scalar>& p, const TokenSeq& seq) {
  std::vector<const TokenSeq*> b{&seq};
  return forward(p, b).front();
}

template <typename Scalar>
Scalar loss(const HeadLogits<Scalar>& l, const Labels& y, SubProblem sp) {
  switch (sp) {
    case SubProblem::SubGoalPlanning:
      return cross_entropy(l.sgType, y.sgType, "sgType") + cross_entropy(l.sgArg, y.sgArg, "sgArg");
    case SubProblem::Navigation:
      return cross_entropy(l.actType, y.actType, "actType");
    case SubProblem::Manipulation:
      return cross_entropy(l.actType, y.actType, "actType") + cross_entropy(l.actArg, y.actArg, "actArg") +
             cross_entropy(l.mask, y.mask, "maskSelect");
  }
  return 0;
}

template <typename Scalar>
Scalar loss_and_grad(const ModelParams<Scalar>& p, const std::vector<const TokenSeq*>& batch,
                     const std::vector<Labels>& labels, VectorX<Scalar>* grad) {
  if (batch.size() != labels.size()) throw std::invalid_argument("batch and label sizes differ");
  if (batch.empty()) throw std::invalid_argument("empty batch");
  Forward<Scalar> f(p, batch);
  f.run();
  Scalar total = 0;
  for (size_t i = 0; i < batch.size(); ++i) total += loss(f.out[i], labels[i], batch[i]->subProblem);
  const Scalar w = static_cast<Scalar>(1) / static_cast<Scalar>(batch.size());
  if (grad) {
    grad->setZero(p.layout.total);
    f.backward(labels, w, *grad);
  }
  return total * w;
}

Labels labels_of(const TrainInstance& x) { return {x.sgType, x.sgArg, x.actType, x.actArg, x.mask}; }

// ============================================================================
// Prediction
// ============================================================================

template <typename Scalar>
int argmax(const VectorX<Scalar>& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return best;
}

SubGoal predict_subgoal(const HeadLogits<float>& l) {
  return {static_cast<SubGoalType>(argmax(l.sgType)), obj_from_index(argmax(l.sgArg))};
}

NavType predict_nav(const HeadLogits<float>& l, const std::array<bool, kNumNavTypes>& disallowed) {
  VectorX<float> v = l.actType.head(kNumNavTypes);
  for (int i = 0; i < kNumNavTypes; ++i)
    if (disallowed[static_cast<size_t>(i)]) v(i) = -std::numeric_limits<float>::infinity();
  return static_cast<NavType>(argmax(v));
}

ManipPrediction predict_manip(const HeadLogits<float>& l) {
  ManipPrediction out;
  out.action.type = static_cast<ManipType>(argmax<float>(l.actType.tail(kNumManipTypes)));
  out.action.arg = obj_from_index(argmax(l.actArg));
  out.maskIndex = argmax(l.mask);
  return out;
}

SubGoal predict_subgoal(const ModelParams<float>& p, const TokenSeq& seq) { return predict_subgoal(forward(p, seq)); }
NavType predict_nav(const ModelParams<float>& p, const TokenSeq& seq, const std::array<bool, kNumNavTypes>& dis) {
  return predict_nav(forward(p, seq), dis);
}
ManipPrediction predict_manip(const ModelParams<float>& p, const TokenSeq& seq) {
  return predict_manip(forward(p, seq));
}

// ============================================================================
// Accuracy
// ============================================================================

std::string_view HeadAccuracy::name(int head) {
  static constexpr std::array<const char*, 6> names = {"sgType", "sgArg", "navType", "manipType", "manipArg", "mask"};
  return names[static_cast<size_t>(head)];
}

void HeadAccuracy::add(const HeadLogits<float>& l, const Labels& y, SubProblem sp) {
  auto count = [&](int head, bool ok) {
    ++total[static_cast<size_t>(head)];
    if (ok) ++correct[static_cast<size_t>(head)];
  };
  switch (sp) {
    case SubProblem::SubGoalPlanning:
      count(SgType, argmax(l.sgType) == y.sgType);
      count(SgArg, argmax(l.sgArg) == y.sgArg);
      break;
    case SubProblem::Navigation:
      count(NavType_, argmax(l.actType) == y.actType);
      break;
    case SubProblem::Manipulation:
      count(ManipType_, argmax(l.actType) == y.actType);
      count(ManipArg, argmax(l.actArg) == y.actArg);
      count(Mask, argmax(l.mask) == y.mask);
      break;
  }
}

void HeadAccuracy::merge(const HeadAccuracy& o) {
  for (size_t i = 0; i < correct.size(); ++i) {
    correct[i] += o.correct[i];
    total[i] += o.total[i];
  }
}

bool HeadAccuracy::all_at_least(double a) const {
  for (int h = 0; h < 6; ++h)
    if (total[static_cast<size_t>(h)] && acc(h) < a) return false;
  return true;
}

HeadAccuracy evaluate_accuracy(const ModelParams<float>& p, const std::vector<TrainInstance>& data, InputConfig cfg,
                               int jobs) {
  constexpr int kChunk = 64;
  const int chunks = static_cast<int>((data.size() + kChunk - 1) / kChunk);
  std::vector<HeadAccuracy> parts(static_cast<size_t>(chunks));
  parallel_for(chunks, jobs, [&](int c) {
    const size_t lo = static_cast<size_t>(c) * kChunk;
    const size_t hi = std::min(data.size(), lo + kChunk);
    std::vector<TokenSeq> seqs;
    for (size_t i = lo; i < hi; ++i) seqs.push_back(encode_instance(data[i], p.hp, cfg));
    std::vector<const TokenSeq*> ptrs;
    for (const auto& s : seqs) ptrs.push_back(&s);
    const auto logits = forward(p, ptrs);
    for (size_t i = lo; i < hi; ++i) {
      Labels y = labels_of(data[i]);
      if (y.mask > seqs[i - lo].nVision) y.mask = 0;
      parts[static_cast<size_t>(c)].add(logits[i - lo], y, data[i].subProblem);
    }
  });
  HeadAccuracy acc;
  for (const auto& part : parts) acc.merge(part);
  return acc;
}

template ModelParams<float> init_params<float>(const Hyperparams&, int, uint64_t);
template ModelParams<double> init_params<double>(const Hyperparams&, int, uint64_t);
template std::vector<HeadLogits<float>> forward<float>(const ModelParams<float>&, const std::vector<const TokenSeq*>&);
template std::vector<HeadLogits<double>> forward<double>(const ModelParams<double>&,
                                                         const std::vector<const TokenSeq*>&);
template HeadLogits<float> forward<float>(const ModelParams<float>&, const TokenSeq&);
template HeadLogits<double> forward<double>(const ModelParams<double>&, const TokenSeq&);
template float loss<float>(const HeadLogits<float>&, const Labels&, SubProblem);
template double loss<double>(const HeadLogits<double>&, const Labels&, SubProblem);
template float loss_and_grad<float>(const ModelParams<float>&, const std::vector<const TokenSeq*>&,
                                    const std::vector<Labels>&, VectorX<float>*);
template double loss_and_grad<double>(const ModelParams<double>&, const std::vector<const TokenSeq*>&,
                                      const std::vector<Labels>&, VectorX<double>*);
template int argmax<float>(const VectorX<float>&);
template int argmax<double>(const VectorX<double>&);

}  // namespace hiertask
