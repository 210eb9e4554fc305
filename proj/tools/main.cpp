// cfstereo command line: train / infer / eval / gradcheck / summary / gen-data
#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cfstereo/checkpoint.hpp"
#include "cfstereo/config.hpp"
#include "cfstereo/gradcheck.hpp"
#include "cfstereo/objective.hpp"
#include "cfstereo/ops.hpp"
#include "cfstereo/pfm.hpp"
#include "cfstereo/png_io.hpp"
#include "cfstereo/synthetic.hpp"
#include "cfstereo/trainer.hpp"

namespace fs = std::filesystem;
using namespace cfstereo;

namespace {

FullConfig config_or_default(const std::string& path) {
    return path.empty() ? FullConfig{} : load_config(path);
}

struct DispFile {
    std::vector<float> disp;
    std::vector<uint8_t> valid;
    int64_t width = 0, height = 0;
};

// Disparity files by extension: .pfm (non-positive/non-finite = invalid) or
// 16-bit KITTI .png (stored 0 = invalid).
DispFile read_disparity(const std::string& path) {
    std::string ext = fs::path(path).extension().string();
    for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".pfm") {
        PfmImage img = read_pfm(path);
        if (img.channels != 1)
            throw std::runtime_error(path + ": disparity PFM must have one channel, got 3");
        DispFile d{img.data, {}, img.width, img.height};
        d.valid.resize(d.disp.size());
        for (size_t i = 0; i < d.disp.size(); ++i)
            d.valid[i] = std::isfinite(d.disp[i]) && d.disp[i] > 0.0f;
        return d;
    }
    if (ext == ".png") {
        KittiDisparity k = read_kitti_disp_png(path);
        return {std::move(k.disp), std::move(k.valid), k.width, k.height};
    }
    throw std::runtime_error(path + ": unsupported disparity format (want .pfm or .png)");
}

int cmd_train(const std::string& config_path, const std::string& checkpoint_path,
              const std::string& out_dir) {
    if (config_path.empty() && checkpoint_path.empty())
        throw std::runtime_error("train: need --config and/or --checkpoint");
    Trainer trainer = [&] {
        if (checkpoint_path.empty()) return Trainer(load_config(config_path));
        Checkpoint ck = load_checkpoint(checkpoint_path);
        if (config_path.empty()) return Trainer::from_checkpoint(ck);
        Trainer t(load_config(config_path));
        t.load(ck);  // rejects a config that disagrees with the checkpoint
        return t;
    }();
    if (trainer.step >= trainer.cfg.train.steps) {
        std::cout << "nothing to do: checkpoint is at step " << trainer.step << " of "
                  << trainer.cfg.train.steps << "\n";
        return 0;
    }

    std::ofstream log_file;
    std::ostream* log = &std::cout;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        // append when resuming so one loss.log spans the whole run
        log_file.open(out_dir + "/loss.log",
                      trainer.step > 0 ? std::ios::app : std::ios::trunc);
        if (!log_file) throw std::runtime_error("train: cannot open " + out_dir + "/loss.log");
        log = &log_file;
    }
    trainer.run(log, out_dir);
    if (!out_dir.empty())
        std::cout << "finished at step " << trainer.step << "; loss log and checkpoints in "
                  << out_dir << "\n";
    return 0;
}

int cmd_infer(const std::string& checkpoint_path, const std::string& left_path,
              const std::string& right_path, const std::string& out_dir) {
    Trainer trainer = Trainer::from_checkpoint(load_checkpoint(checkpoint_path));
    Tensor<float> left = read_image_png(left_path);
    Tensor<float> right = read_image_png(right_path);
    std::vector<float> disp = infer_disparity(trainer.net, left, right);
    const int64_t h = left.dim(2), w = left.dim(3);

    fs::create_directories(out_dir);
    PfmImage img;
    img.width = w;
    img.height = h;
    img.channels = 1;
    img.data = disp;
    write_pfm(out_dir + "/disparity.pfm", img);

    // grayscale preview: [0, d_max] mapped onto [0, 255]
    const float d_max = static_cast<float>(trainer.cfg.net.d_max);
    std::vector<float> viz(disp.size());
    for (size_t i = 0; i < disp.size(); ++i)
        viz[i] = std::clamp(disp[i] / d_max, 0.0f, 1.0f);
    write_image_png(out_dir + "/disparity.png", Tensor<float>::from({1, 1, h, w}, std::move(viz)));

    std::cout << "wrote " << out_dir << "/disparity.pfm and disparity.png (" << w << "x" << h
              << ", d_max " << trainer.cfg.net.d_max << ")\n";
    return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path) {
    DispFile pred = read_disparity(pred_path);
    DispFile gt = read_disparity(gt_path);
    if (pred.width != gt.width || pred.height != gt.height)
        throw std::runtime_error("eval: size mismatch, pred " + std::to_string(pred.width) + "x" +
                                 std::to_string(pred.height) + " vs gt " +
                                 std::to_string(gt.width) + "x" + std::to_string(gt.height));
    std::cout << evaluate_disparity(pred.disp, gt.disp, gt.valid).to_lines();
    return 0;
}

int cmd_summary(const std::string& config_path) {
    std::cout << summarize(config_or_default(config_path).net).to_text();
    return 0;
}

int cmd_gen_data(const std::string& config_path, uint64_t seed, const std::string& out_dir) {
    const FullConfig cfg = config_or_default(config_path);
    SyntheticSpec spec;
    spec.width = cfg.train.crop_w;
    spec.height = cfg.train.crop_h;
    spec.d_max = cfg.net.d_max;
    spec.texture = cfg.data.texture;
    spec.field = cfg.data.field;
    spec.seed = seed;
    StereoSample<float> s = generate_sample<float>(spec);

    fs::create_directories(out_dir);
    write_image_png(out_dir + "/left.png", s.left);
    write_image_png(out_dir + "/right.png", s.right);
    PfmImage gt;
    gt.width = spec.width;
    gt.height = spec.height;
    gt.channels = 1;
    gt.data.resize(s.gt.size());
    for (size_t i = 0; i < s.gt.size(); ++i) gt.data[i] = s.valid[i] ? s.gt[i] : 0.0f;
    write_pfm(out_dir + "/gt.pfm", gt);

    std::cout << "wrote left.png, right.png, gt.pfm (" << spec.width << "x" << spec.height
              << ", d_max " << spec.d_max << ", seed " << seed << ") to " << out_dir << "\n";
    return 0;
}

int cmd_gradcheck() {
    int failures = 0;
    auto run = [&failures](const char* name, double tol,
                           const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& f,
                           std::vector<Tensor<double>> inputs, double step = 1e-4,
                           double floor = 1e-8) {
        GradCheckReport rep = gradcheck(f, std::move(inputs), step, 0x5eed, floor);
        const bool ok = rep.pass(tol);
        failures += ok ? 0 : 1;
        std::printf("%-22s max_rel %.3e  tol %.0e  %s\n", name, rep.worst, tol,
                    ok ? "PASS" : "FAIL");
    };
    auto rt = [](Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
        std::vector<double> v(static_cast<size_t>(numel(shape)));
        for (auto& x : v) x = rng.uniform(lo, hi);
        return Tensor<double>::from(std::move(shape), std::move(v));
    };
    Rng rng(4242);

    run("conv2d", 1e-4,
        [](const std::vector<Tensor<double>>& in) {
            return conv2d(in[0], in[1], std::optional<Tensor<double>>(in[2]), 2, 1, 1);
        },
        {rt({2, 2, 5, 4}, rng), rt({3, 2, 3, 3}, rng), rt({3}, rng)});
    run("conv2d dilated", 1e-4,
        [](const std::vector<Tensor<double>>& in) {
            return conv2d(in[0], in[1], std::nullopt, 1, 2, 2);
        },
        {rt({1, 2, 7, 7}, rng), rt({2, 2, 3, 3}, rng)});
    run("conv3d", 1e-4,
        [](const std::vector<Tensor<double>>& in) {
            return conv3d(in[0], in[1], std::optional<Tensor<double>>(in[2]), 2, 1);
        },
        {rt({1, 2, 4, 5, 4}, rng), rt({2, 2, 3, 3, 3}, rng), rt({2}, rng)});
    run("deconv3d", 1e-4,
        [](const std::vector<Tensor<double>>& in) {
            return deconv3d(in[0], in[1], std::optional<Tensor<double>>(in[2]), 2, 1);
        },
        {rt({1, 2, 2, 3, 3}, rng), rt({2, 2, 3, 3, 3}, rng), rt({2}, rng)});
    run("avg_pool2d", 1e-4,
        [](const std::vector<Tensor<double>>& in) { return avg_pool2d(in[0], 2); },
        {rt({1, 3, 5, 6}, rng)});
    run("adaptive_avg_pool2d", 1e-4,
        [](const std::vector<Tensor<double>>& in) { return adaptive_avg_pool2d(in[0], 3, 2); },
        {rt({1, 2, 7, 5}, rng)});
    run("bilinear_upsample2d", 1e-4,
        [](const std::vector<Tensor<double>>& in) { return bilinear_upsample2d(in[0], 5, 7); },
        {rt({1, 2, 3, 4}, rng)});
    run("trilinear_upsample3d", 1e-4,
        [](const std::vector<Tensor<double>>& in) {
            return trilinear_upsample3d(in[0], 3, 5, 4);
        },
        {rt({1, 1, 2, 3, 3}, rng)});
    run("softmax", 1e-4,
        [](const std::vector<Tensor<double>>& in) { return softmax(in[0], 1); },
        {rt({2, 5, 3}, rng)});
    for (bool train : {true, false})
        run(train ? "batchnorm train" : "batchnorm eval", 1e-4,
            [train](const std::vector<Tensor<double>>& in) {
                // fresh buffers per evaluation: finite differencing must not
                // see running statistics from a previous call
                auto rm = Tensor<double>::zeros({2});
                auto rv = Tensor<double>::full({2}, 1.0);
                return batchnorm(in[0], in[1], in[2], rm, rv, train);
            },
            {rt({2, 2, 3, 3}, rng, -2, 2), rt({2}, rng, 0.5, 1.5), rt({2}, rng, -0.5, 0.5)});
    {
        std::vector<double> gt(12);
        Rng grng(77);
        for (auto& g : gt) g = grng.uniform(-2.0, 2.0);
        std::vector<uint8_t> m(12, 1);
        run("smooth_l1_loss", 1e-4,
            [gt, m](const std::vector<Tensor<double>>& in) {
                return masked_smooth_l1_loss(in[0], gt, m);
            },
            {rt({1, 3, 4}, rng, -2, 2)});
    }

    // end-to-end: micro network, forward + loss w.r.t. every parameter
    {
        NetworkConfig cfg;
        cfg.d_max = 16;
        cfg.base_channels = 4;
        cfg.block_counts = {1, 1, 1};
        cfg.stage_channels = {4, 4, 8};
        cfg.fusion_channels = 2;
        cfg.use_batchnorm = false;
        StereoNetwork<double> net(cfg, 23);
        Rng jrng(7);  // nudge biases off the dead-ReLU configuration
        for (auto& [name, t] : net.store.params)
            if (name.size() > 5 && name.compare(name.size() - 5, 5, ".bias") == 0)
                for (auto& v : t.mutable_values()) v = jrng.uniform(0.02, 0.1);
        Rng drng(24);
        auto left = rt({1, 3, 16, 32}, drng, 0.0, 1.0);
        auto right = rt({1, 3, 16, 32}, drng, 0.0, 1.0);
        std::vector<double> gt(16 * 32);
        std::vector<uint8_t> mask(16 * 32, 1);
        for (auto& g : gt) g = drng.uniform(1.0, 14.0);
        std::vector<Tensor<double>> params;
        for (auto& [name, t] : net.store.params) params.push_back(t);
        // step below the ReLU kinks; floored denominator keeps roundoff on
        // negligible gradients out of the relative error
        run("end-to-end network", 1e-3,
            [&](const std::vector<Tensor<double>>&) {
                return masked_smooth_l1_loss(net.forward(left, right, true), gt, mask);
            },
            params, 1e-5, 1e-4);
    }

    if (failures) {
        std::printf("%d gradient check(s) FAILED\n", failures);
        return 1;
    }
    std::printf("all gradient checks passed\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"end-to-end stereo disparity estimation: training, inference, evaluation"};
    app.require_subcommand(1);

    std::string config_path, checkpoint_path, left_path, right_path, pred_path, gt_path, out_dir;
    uint64_t seed = 0;

    CLI::App* train = app.add_subcommand("train", "train a model from a config file");
    train->add_option("--config", config_path, "config file (key = value lines)")
        ->check(CLI::ExistingFile);
    train->add_option("--checkpoint", checkpoint_path, "checkpoint to resume from")
        ->check(CLI::ExistingFile);
    train->add_option("--out", out_dir, "directory for checkpoints and loss.log");

    CLI::App* infer = app.add_subcommand("infer", "predict disparity for one image pair");
    infer->add_option("--checkpoint", checkpoint_path, "trained model checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    infer->add_option("--left", left_path, "left image (PNG)")->required()->check(CLI::ExistingFile);
    infer->add_option("--right", right_path, "right image (PNG)")
        ->required()
        ->check(CLI::ExistingFile);
    infer->add_option("--out", out_dir, "output directory")->required();

    CLI::App* eval = app.add_subcommand("eval", "compare a predicted disparity map against ground truth");
    eval->add_option("--pred", pred_path, "predicted disparity (.pfm or 16-bit .png)")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--gt", gt_path, "ground-truth disparity (.pfm or 16-bit .png)")
        ->required()
        ->check(CLI::ExistingFile);

    CLI::App* gradcheck_cmd =
        app.add_subcommand("gradcheck", "finite-difference checks for every primitive and the full network");

    CLI::App* summary = app.add_subcommand("summary", "parameter counts per module");
    summary->add_option("--config", config_path, "config file (defaults apply when omitted)")
        ->check(CLI::ExistingFile);

    CLI::App* gen = app.add_subcommand("gen-data", "write one synthetic stereo sample");
    gen->add_option("--config", config_path, "config controlling size, d_max, texture, field")
        ->check(CLI::ExistingFile);
    gen->add_option("--seed", seed, "sample seed");
    gen->add_option("--out", out_dir, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return cmd_train(config_path, checkpoint_path, out_dir);
        if (*infer) return cmd_infer(checkpoint_path, left_path, right_path, out_dir);
        if (*eval) return cmd_eval(pred_path, gt_path);
        if (*gradcheck_cmd) return cmd_gradcheck();
        if (*summary) return cmd_summary(config_path);
        if (*gen) return cmd_gen_data(config_path, seed, out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
