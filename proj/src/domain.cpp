#include "lift/domain.hpp"

#include <algorithm>
#include <string>

namespace lift {

DatasetSplits temporal_split(const std::vector<Interaction>& interactions, const SplitFractions& fractions) {
    if (interactions.empty()) throw EmptyDatasetError("temporal_split: empty dataset");
    if (fractions.retrieval <= 0.0 || fractions.train <= 0.0 || fractions.test <= 0.0)
        throw BadFractionsError("temporal_split: all fractions must be positive");

    std::vector<Interaction> sorted = interactions;
    std::sort(sorted.begin(), sorted.end(), event_order);

    // Train and test take their floored shares; the retrieval part absorbs
    // the rounding remainder, so a tiny dataset still has a retrieval split.
    const std::size_t n = sorted.size();
    const auto n_train = std::size_t(fractions.train * double(n));
    const std::size_t n_retrieval = n - n_train - std::size_t(fractions.test * double(n));

    DatasetSplits splits;
    splits.retrieval.assign(sorted.begin(), sorted.begin() + std::ptrdiff_t(n_retrieval));
    splits.train.assign(sorted.begin() + std::ptrdiff_t(n_retrieval),
                        sorted.begin() + std::ptrdiff_t(n_retrieval + n_train));
    splits.test.assign(sorted.begin() + std::ptrdiff_t(n_retrieval + n_train), sorted.end());

    splits.boundary_retrieval_end = splits.retrieval.empty() ? sorted.front().timestamp - 1
                                                             : splits.retrieval.back().timestamp;
    splits.boundary_train_end = splits.train.empty() ? splits.boundary_retrieval_end
                                                     : splits.train.back().timestamp;
    return splits;
}

std::map<std::uint32_t, InteractionSequence> build_user_sequences(const std::vector<Interaction>& interactions) {
    std::map<std::uint32_t, InteractionSequence> sequences;
    for (const auto& it : interactions) {
        auto& seq = sequences[it.user_id];
        seq.user_id = it.user_id;
        seq.interactions.push_back(it);
    }
    for (auto& [user, seq] : sequences) {
        (void)user;
        std::sort(seq.interactions.begin(), seq.interactions.end(), event_order);
    }
    return sequences;
}

Context extract_context(const InteractionSequence& sequence, int anchor_index, int context_len) {
    const int total = int(sequence.interactions.size());
    if (context_len < 1) throw Error("extract_context: context_len must be >= 1");
    if (anchor_index < 0 || anchor_index >= total)
        throw BadAnchorError("extract_context: anchor index " + std::to_string(anchor_index) +
                             " out of range [0, " + std::to_string(total) + ")");

    const int hist_begin = std::max(0, anchor_index - context_len);
    const int fut_end = std::min(total, anchor_index + 1 + context_len);

    Context ctx;
    ctx.history.assign(sequence.interactions.begin() + hist_begin,
                       sequence.interactions.begin() + anchor_index);
    ctx.future.assign(sequence.interactions.begin() + anchor_index + 1,
                      sequence.interactions.begin() + fut_end);
    ctx.history_true_len = int(ctx.history.size());
    ctx.future_true_len = int(ctx.future.size());
    return ctx;
}

}  // namespace lift
