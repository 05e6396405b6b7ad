#include "hcan/metrics.hpp"

namespace hcan {

Metrics compute_metrics(const std::vector<int>& gold, const std::vector<int>& pred,
                        int num_classes) {
  if (gold.size() != pred.size())
    throw DataError("compute_metrics: gold/pred length mismatch");
  Metrics m;
  m.total = static_cast<long>(gold.size());
  m.confusion.assign(static_cast<std::size_t>(num_classes),
                     std::vector<long>(static_cast<std::size_t>(num_classes), 0));
  m.support.assign(static_cast<std::size_t>(num_classes), 0);
  long correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    int g = gold[i], p = pred[i];
    if (g < 0 || g >= num_classes || p < 0 || p >= num_classes)
      throw DataError("compute_metrics: class index out of range");
    ++m.confusion[static_cast<std::size_t>(g)][static_cast<std::size_t>(p)];
    ++m.support[static_cast<std::size_t>(g)];
    if (g == p) ++correct;
  }
  m.accuracy = m.total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(m.total);

  m.per_class_f1.assign(static_cast<std::size_t>(num_classes), 0.0);
  double weighted = 0.0;
  long support_sum = 0;
  for (int c = 0; c < num_classes; ++c) {
    long tp = m.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)];
    long fp = 0, fn = 0;
    for (int o = 0; o < num_classes; ++o) {
      if (o == c) continue;
      fp += m.confusion[static_cast<std::size_t>(o)][static_cast<std::size_t>(c)];
      fn += m.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(o)];
    }
    double precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    double recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    double f1 = precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
    m.per_class_f1[static_cast<std::size_t>(c)] = f1;
    weighted += static_cast<double>(m.support[static_cast<std::size_t>(c)]) * f1;
    support_sum += m.support[static_cast<std::size_t>(c)];
  }
  m.weighted_f1 = support_sum == 0 ? 0.0 : weighted / static_cast<double>(support_sum);
  return m;
}

Metrics evaluate(HcanModel& model, const std::vector<Conversation>& conversations) {
  std::vector<int> gold, pred;
  for (const Conversation& conv : conversations) {
    if (!conv.fully_labeled())
      throw DataError("evaluate: labels required, conversation " + conv.id + " is unlabeled");
    HcanModel::Prediction p = model.predict(conv);
    for (int i = 0; i < conv.length(); ++i) {
      gold.push_back(*conv.utterances[static_cast<std::size_t>(i)].label);
      pred.push_back(p.labels[static_cast<std::size_t>(i)]);
    }
  }
  return compute_metrics(gold, pred, model.cfg.num_labels);
}

}  // namespace hcan
