#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "cfstereo/checkpoint.hpp"
#include "cfstereo/config.hpp"
#include "cfstereo/matcher.hpp"
#include "cfstereo/objective.hpp"
#include "cfstereo/synthetic.hpp"

namespace cfstereo {

// SGD or Adam (bias-corrected) over a parameter store. A zero learning rate
// is a legal identity update; configs require a positive rate, but the
// optimizer itself does not care.
template <typename T>
class Optimizer {
  public:
    Optimizer(OptimizerKind kind, double learning_rate)
        : kind_(kind), lr_(learning_rate) {}

    void apply(ParamStore<T>& store);  // consumes accumulated grads; skips gradless params

    OptimizerKind kind() const { return kind_; }
    double learning_rate() const { return lr_; }

    // Adam state, exposed for checkpointing
    int64_t steps_taken = 0;
    std::map<std::string, std::vector<T>> m, v;

  private:
    OptimizerKind kind_;
    double lr_;
};

// Returns the H*W disparity map for one pair, eval mode, no autodiff tape.
std::vector<float> infer_disparity(StereoNetwork<float>& net, const Tensor<float>& left,
                                   const Tensor<float>& right);

// True when the window-median of the curve never increases from one window
// start to the next, beginning at `start` (divergence guard for loss curves).
bool median_smoothed_non_increasing(const std::vector<double>& losses, int64_t window,
                                    int64_t start, double slack = 1e-9);

class Trainer {
  public:
    explicit Trainer(const FullConfig& config);
    static Trainer from_checkpoint(const Checkpoint& ck);

    // Overfit mode replays one seeded sample; stream mode derives a fresh
    // seed per step. Both are pure functions of (config, step).
    StereoSample<float> sample_for_step(int64_t at_step) const;

    // forward + backward + optimizer update; throws (without updating) on a
    // non-finite loss, naming the first stage that produced non-finite values
    double train_step(const StereoSample<float>& sample);

    // Runs cfg.train.steps steps, appending "step\tloss" lines every
    // log_every steps and writing ckpt_<step>.bin into checkpoint_dir (when
    // non-empty) every checkpoint_every steps; both always fire on the last.
    void run(std::ostream* loss_log, const std::string& checkpoint_dir);

    Checkpoint to_checkpoint() const;
    void load(const Checkpoint& ck);  // params, buffers, optimizer state, step

    FullConfig cfg;
    StereoNetwork<float> net;
    Optimizer<float> opt;
    int64_t step = 0;
};

// Parameter-count report assembled from a freshly constructed network.
struct SummaryReport {
    int64_t extractor = 0, pyramid = 0, matcher = 0, total = 0;
    std::string to_text() const;  // key=value lines; total also in millions
};

SummaryReport summarize(const NetworkConfig& cfg);

}  // namespace cfstereo
