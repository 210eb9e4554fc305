#include <cstdio>

#include "cfstereo/trainer.hpp"

namespace cfstereo {

std::string SummaryReport::to_text() const {
    char buf[64];
    std::string s;
    s += "extractor = " + std::to_string(extractor) + "\n";
    s += "pyramid = " + std::to_string(pyramid) + "\n";
    s += "matcher = " + std::to_string(matcher) + "\n";
    s += "total = " + std::to_string(total) + "\n";
    std::snprintf(buf, sizeof(buf), "total_millions = %.2f\n", static_cast<double>(total) / 1e6);
    s += buf;
    return s;
}

SummaryReport summarize(const NetworkConfig& cfg) {
    cfg.validate();
    StereoNetwork<float> net(cfg, 0);
    SummaryReport r;
    r.extractor = net.store.param_count_with_prefix("extractor.");
    r.pyramid = net.store.param_count_with_prefix("pyramid.");
    r.matcher = net.store.param_count_with_prefix("matcher.");
    r.total = net.store.param_count();
    return r;
}

}  // namespace cfstereo
