#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cse/dataset.hpp"
#include "cse/models.hpp"
#include "cse/train.hpp"

namespace cse {

/// Per-(member, fold) validation scores, the raw material of stacking.
struct MemberFoldScores {
  MemberId member = MemberId::M1;
  int fold = -1;
  std::vector<SegmentId> ids;
  std::vector<Tensor> scores;  // S vectors aligned with ids
};

/// Out-of-fold stacked features: one row per pool segment, each produced by
/// the fold in which the segment was validation.
struct OofFeatures {
  std::vector<MemberId> members;
  std::vector<std::string> member_hashes;  // ModelSpec content hashes, member order
  std::vector<SegmentId> ids;
  std::vector<int> labels;
  std::vector<int> fold_of;
  std::vector<Tensor> rows;  // concatenated S vectors, width 2*members

  size_t size() const { return ids.size(); }
  int width() const { return 2 * static_cast<int>(members.size()); }
};

/// Assembles OOF rows from per-fold member scores. Requires a plan whose
/// validation blocks are a disjoint cover of the pool (stratified or the
/// balanced OOF variant).
inline OofFeatures collect_oof(const std::vector<MemberId>& members, const FoldPlan& plan,
                               const std::vector<MemberFoldScores>& outputs,
                               const std::map<SegmentId, int>& labels) {
  if (members.empty()) throw std::invalid_argument("collect_oof: no members");

  // validation blocks must be disjoint and cover the pool
  std::map<SegmentId, int> fold_of;
  for (int f = 0; f < plan.k(); ++f) {
    for (const auto& id : plan.folds[static_cast<size_t>(f)].val) {
      if (!fold_of.emplace(id, f).second) {
        throw std::invalid_argument("collect_oof: segment " + id.str() + " is validation in two folds");
      }
    }
  }

  std::map<SegmentId, std::vector<std::optional<Tensor>>> table;
  for (const auto& [id, f] : fold_of) {
    table[id] = std::vector<std::optional<Tensor>>(members.size());
  }

  for (int f = 0; f < plan.k(); ++f) {
    for (size_t m = 0; m < members.size(); ++m) {
      const MemberFoldScores* found = nullptr;
      for (const auto& o : outputs) {
        if (o.member == members[m] && o.fold == f) {
          found = &o;
          break;
        }
      }
      if (found == nullptr) {
        throw std::runtime_error(std::string("collect_oof: missing fold output for member ") +
                                 member_name(members[m]) + " fold " + std::to_string(f));
      }
      if (found->ids.size() != found->scores.size()) {
        throw std::invalid_argument("collect_oof: ids/scores misaligned");
      }
      for (size_t i = 0; i < found->ids.size(); ++i) {
        auto it = table.find(found->ids[i]);
        if (it == table.end() || fold_of[found->ids[i]] != f) {
          throw std::runtime_error("collect_oof: segment " + found->ids[i].str() +
                                   " scored by fold " + std::to_string(f) + " but not its validation block");
        }
        it->second[m] = found->scores[i];
      }
    }
  }

  OofFeatures oof;
  oof.members = members;
  for (MemberId m : members) oof.member_hashes.push_back(member_spec(m).content_hash());
  for (auto& [id, scores] : table) {
    Tensor row({2 * static_cast<int>(members.size())});
    for (size_t m = 0; m < members.size(); ++m) {
      if (!scores[m].has_value()) {
        throw std::runtime_error(std::string("collect_oof: no score for segment ") + id.str() + " from member " +
                                 member_name(members[m]) + " fold " + std::to_string(fold_of[id]));
      }
      row(static_cast<int>(2 * m)) = (*scores[m])(0);
      row(static_cast<int>(2 * m + 1)) = (*scores[m])(1);
    }
    auto lit = labels.find(id);
    if (lit == labels.end()) throw std::runtime_error("collect_oof: no label for segment " + id.str());
    oof.ids.push_back(id);
    oof.labels.push_back(lit->second);
    oof.fold_of.push_back(fold_of[id]);
    oof.rows.push_back(std::move(row));
  }
  return oof;
}

/// Column view of an OOF table restricted to a member subset, preserving row
/// order. Training a stack on the view must equal training on a table
/// collected for that subset directly.
inline OofFeatures subset_members(const OofFeatures& oof, const std::vector<MemberId>& members) {
  std::vector<int> cols;
  for (MemberId m : members) {
    int found = -1;
    for (size_t i = 0; i < oof.members.size(); ++i) {
      if (oof.members[i] == m) found = static_cast<int>(i);
    }
    if (found < 0) {
      throw std::invalid_argument(std::string("subset_members: member ") + member_name(m) + " not in OOF table");
    }
    cols.push_back(found);
  }
  OofFeatures out;
  out.members = members;
  for (MemberId m : members) out.member_hashes.push_back(member_spec(m).content_hash());
  out.ids = oof.ids;
  out.labels = oof.labels;
  out.fold_of = oof.fold_of;
  out.rows.reserve(oof.rows.size());
  for (const auto& row : oof.rows) {
    Tensor r({2 * static_cast<int>(members.size())});
    for (size_t m = 0; m < cols.size(); ++m) {
      r(static_cast<int>(2 * m)) = row(2 * cols[m]);
      r(static_cast<int>(2 * m + 1)) = row(2 * cols[m] + 1);
    }
    out.rows.push_back(std::move(r));
  }
  return out;
}

/// Structural no-leakage audit: counts OOF rows whose segment sits in the
/// producing fold's training pool. Must be zero for a valid plan.
inline size_t audit_oof_leakage(const FoldPlan& plan, const OofFeatures& oof) {
  size_t violations = 0;
  for (size_t i = 0; i < oof.size(); ++i) {
    const auto& train = plan.folds[static_cast<size_t>(oof.fold_of[i])].train;
    if (std::binary_search(train.begin(), train.end(), oof.ids[i])) ++violations;
  }
  return violations;
}

/// The trained stack: meta classifier plus (optionally) full-pool refit
/// parameters per member for test-time S production.
struct CseClassifier {
  std::vector<MemberId> members;
  std::vector<std::string> member_hashes;
  MetaModel meta{3};
  std::map<MemberId, ParamSet> refit_params;
  std::map<MemberId, std::vector<ParamSet>> fold_params;  // for the fold-averaging mode
  bool average_folds = false;

  int member_index(MemberId m) const {
    for (size_t i = 0; i < members.size(); ++i) {
      if (members[i] == m) return static_cast<int>(i);
    }
    return -1;
  }
};

/// Trains the dense stacking head on the OOF rows (20% seeded stratified
/// hold-out drives early stopping). Member provenance hashes carry over.
inline CseClassifier train_cse(const OofFeatures& oof, uint64_t seed, const TrainRecipe& recipe = {}) {
  if (oof.size() == 0) throw std::invalid_argument("train_cse: empty OOF features");
  size_t pos = 0;
  for (int l : oof.labels) pos += static_cast<size_t>(l);
  if (pos == 0 || pos == oof.size()) {
    throw std::invalid_argument("train_cse: OOF labels are single-class; need both classes");
  }

  CseClassifier clf;
  clf.members = oof.members;
  clf.member_hashes = oof.member_hashes;
  clf.meta = MetaModel(static_cast<int>(oof.members.size()));
  const Rng stream(seed, 0xC5E);
  clf.meta.init(stream.substream(0));

  // seeded stratified hold-out for early stopping
  std::vector<size_t> pos_idx, neg_idx;
  for (size_t i = 0; i < oof.size(); ++i) (oof.labels[i] == 1 ? pos_idx : neg_idx).push_back(i);
  Rng holdout_rng = stream.substream(99);
  holdout_rng.shuffle(pos_idx);
  holdout_rng.shuffle(neg_idx);
  const size_t pos_hold = std::max<size_t>(1, pos_idx.size() / 5);
  const size_t neg_hold = std::max<size_t>(1, neg_idx.size() / 5);

  std::vector<const Tensor*> train_x, val_x;
  std::vector<int> train_y, val_y;
  auto split = [&](const std::vector<size_t>& idx, size_t hold) {
    for (size_t i = 0; i < idx.size(); ++i) {
      if (i < hold) {
        val_x.push_back(&oof.rows[idx[i]]);
        val_y.push_back(oof.labels[idx[i]]);
      } else {
        train_x.push_back(&oof.rows[idx[i]]);
        train_y.push_back(oof.labels[idx[i]]);
      }
    }
  };
  split(pos_idx, pos_hold);
  split(neg_idx, neg_hold);

  fit_model(clf.meta, train_x, train_y, val_x, val_y, recipe, stream);
  return clf;
}

struct CsePrediction {
  int label = 0;
  double confidence = 0;               // sigmoid of the positive meta unit
  std::vector<double> member_conf;     // sigmoid of each member's positive logit
  Tensor meta_logits;
};

/// Concatenated member S vectors -> dense map -> per-unit sigmoid -> argmax.
/// Equal outputs break toward Not-Crossing.
inline CsePrediction cse_predict(CseClassifier& clf, const std::vector<Tensor>& member_scores) {
  if (member_scores.size() != clf.members.size()) {
    throw std::invalid_argument("cse_predict: got " + std::to_string(member_scores.size()) +
                                " member scores, expected " + std::to_string(clf.members.size()));
  }
  Tensor row({2 * static_cast<int>(clf.members.size())});
  CsePrediction out;
  for (size_t m = 0; m < member_scores.size(); ++m) {
    if (member_scores[m].rank() != 1 || member_scores[m].extent(0) != 2) {
      throw std::invalid_argument(std::string("cse_predict: member ") + member_name(clf.members[m]) +
                                  " score must be a 2-vector");
    }
    row(static_cast<int>(2 * m)) = member_scores[m](0);
    row(static_cast<int>(2 * m + 1)) = member_scores[m](1);
    out.member_conf.push_back(positive_confidence(member_scores[m]));
  }
  out.meta_logits = clf.meta.forward(row, Mode::eval, nullptr);
  out.label = argmax2(out.meta_logits);
  out.confidence = positive_confidence(out.meta_logits);
  return out;
}

// ---------------------------------------------------------------------------
// OOF table IO: segment id, fold, member, S0, S1, label

inline void save_oof(const OofFeatures& oof, const std::string& path, char delim = ',') {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "segment" << delim << "fold" << delim << "member" << delim << "s0" << delim << "s1" << delim
     << "label\n";
  char buf[32];
  for (size_t i = 0; i < oof.size(); ++i) {
    for (size_t m = 0; m < oof.members.size(); ++m) {
      os << oof.ids[i].str() << delim << oof.fold_of[i] << delim << member_name(oof.members[m]) << delim;
      std::snprintf(buf, sizeof(buf), "%.17g", oof.rows[i](static_cast<int>(2 * m)));
      os << buf << delim;
      std::snprintf(buf, sizeof(buf), "%.17g", oof.rows[i](static_cast<int>(2 * m + 1)));
      os << buf << delim << oof.labels[i] << "\n";
    }
  }
}

}  // namespace cse
