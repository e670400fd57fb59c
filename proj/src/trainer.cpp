#include "clrkit/trainer.hpp"

#include "clrkit/metrics.hpp"

#include <cmath>
#include <cstdio>

namespace F = torch::nn::functional;

namespace clrkit {

torch::Tensor stabilize_gradient(const torch::Tensor& attacked,
                                 const torch::Tensor& protected_img) {
    TORCH_CHECK(attacked.sizes() == protected_img.sizes(),
                "stabilize_gradient: shape mismatch");
    return protected_img + (attacked - protected_img).detach();
}

std::string TrainLogRow::csv_header() {
    return "step,stage,l_prt,l_rec,l_loc,l_cons,d_a,d_b,psnr_protect,f1";
}

std::string TrainLogRow::csv() const {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%lld,%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g",
                  static_cast<long long>(step), stage_name(stage), l_prt, l_rec, l_loc, l_cons,
                  d_a, d_b, psnr_protect, f1);
    return buf;
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

Models Models::build(const RunConfig& cfg) {
    torch::manual_seed(static_cast<std::int64_t>(cfg.seed));
    Models m;
    GeneratorConfig g;
    g.levels = cfg.levels;
    g.couplings_per_level = cfg.couplings_per_level;
    g.base_channels = cfg.base_channels;
    g.clamp = cfg.clamp;
    g.use_spectral_norm = cfg.spectral_norm;
    m.generator = InnGenerator(g);
    m.preprocessor = Preprocessor();
    m.localizer = Localizer();
    m.fgjpeg = FgJpeg();
    m.d_a = PatchDiscriminator();
    m.d_b = PatchDiscriminator();
    return m;
}

std::map<std::string, torch::nn::Module*> Models::module_map() {
    return {{"generator", generator.get()},   {"preprocessor", preprocessor.get()},
            {"localizer", localizer.get()},   {"fgjpeg", fgjpeg.get()},
            {"d_a", d_a.get()},               {"d_b", d_b.get()}};
}

void Models::eval() {
    generator->eval();
    preprocessor->eval();
    localizer->eval();
    fgjpeg->eval();
    d_a->eval();
    d_b->eval();
}

void Models::train() {
    generator->train();
    preprocessor->train();
    localizer->train();
    // fgjpeg stays in eval: it is trained by its own loop and only consulted
    // as a frozen simulator here.
    fgjpeg->eval();
    d_a->train();
    d_b->train();
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

namespace {

std::vector<torch::Tensor> main_parameters(Models& m) {
    std::vector<torch::Tensor> params;
    for (auto& p : m.generator->parameters()) params.push_back(p);
    for (auto& p : m.preprocessor->parameters()) params.push_back(p);
    for (auto& p : m.localizer->parameters()) params.push_back(p);
    return params;
}

// Predicted rectangles can collapse early in joint training; keep the
// geometry usable for zero_pad_resize.
RectMask sanitize_rect(RectMask r, std::int64_t h, std::int64_t w) {
    const double min_w = 6.0 / static_cast<double>(w);
    const double min_h = 6.0 / static_cast<double>(h);
    if (r.width() < min_w) {
        const double c = std::clamp((r.x0 + r.x1) / 2, min_w / 2, 1 - min_w / 2);
        r.x0 = c - min_w / 2;
        r.x1 = c + min_w / 2;
    }
    if (r.height() < min_h) {
        const double c = std::clamp((r.y0 + r.y1) / 2, min_h / 2, 1 - min_h / 2);
        r.y0 = c - min_h / 2;
        r.y1 = c + min_h / 2;
    }
    return r;
}

torch::Tensor rects_to_tensor(const std::vector<RectMask>& rects) {
    auto t = torch::empty({static_cast<std::int64_t>(rects.size()), 4});
    for (std::size_t i = 0; i < rects.size(); ++i) {
        t[static_cast<std::int64_t>(i)][0] = static_cast<float>(rects[i].x0);
        t[static_cast<std::int64_t>(i)][1] = static_cast<float>(rects[i].y0);
        t[static_cast<std::int64_t>(i)][2] = static_cast<float>(rects[i].x1);
        t[static_cast<std::int64_t>(i)][3] = static_cast<float>(rects[i].y1);
    }
    return t;
}

}  // namespace

Trainer::Trainer(RunConfig cfg, Models models)
    : cfg_(std::move(cfg)), models_(std::move(models)), rng_(make_rng(cfg_.seed)),
      current_lr_(cfg_.lr) {
    state_.threshold = cfg_.stage_threshold;
    opt_main_ = std::make_unique<torch::optim::Adam>(main_parameters(models_),
                                                     torch::optim::AdamOptions(cfg_.lr));
    opt_da_ = std::make_unique<torch::optim::Adam>(models_.d_a->parameters(),
                                                   torch::optim::AdamOptions(cfg_.lr));
    opt_db_ = std::make_unique<torch::optim::Adam>(models_.d_b->parameters(),
                                                   torch::optim::AdamOptions(cfg_.lr));
    models_.train();
}

void Trainer::set_lr(double lr) {
    current_lr_ = lr;
    for (auto* opt : {opt_main_.get(), opt_da_.get(), opt_db_.get()})
        for (auto& group : opt->param_groups())
            static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

void Trainer::maybe_decay_lr() {
    const auto at60 = static_cast<std::int64_t>(0.6 * static_cast<double>(cfg_.total_steps));
    const auto at85 = static_cast<std::int64_t>(0.85 * static_cast<double>(cfg_.total_steps));
    if (state_.step == at60 || state_.step == at85) set_lr(current_lr_ * 0.5);
}

torch::Tensor Trainer::make_view(const torch::Tensor& xq, const torch::Tensor& cover,
                                 const std::vector<RectMask>& rects,
                                 const std::optional<AttackSpec>& attack) {
    const auto h = xq.size(2), w = xq.size(3);
    std::vector<torch::Tensor> crops, cover_crops;
    for (std::int64_t i = 0; i < xq.size(0); ++i) {
        const auto& r = rects[static_cast<std::size_t>(i)];
        crops.push_back(region_select(xq[i], r, {{h, w}}));
        if (attack && attack->kind == AttackKind::Dropout)
            cover_crops.push_back(region_select(cover[i], r, {{h, w}}));
    }
    auto rs = torch::stack(crops);
    if (!attack) return rs;

    // The attack itself runs outside the graph; its value re-enters through a
    // straight-through pass so the gradient skips the attack computation.
    torch::Tensor attacked;
    {
        torch::NoGradGuard ng;
        AttackContext ctx;
        ctx.rng = &rng_;
        ctx.quantize = cfg_.quantize;
        torch::Tensor cover_batch;
        if (!cover_crops.empty()) {
            cover_batch = torch::stack(cover_crops);
            ctx.cover = &cover_batch;
        }
        if (!models_.fgjpeg.is_empty())
            ctx.jpeg_sim = [this](const torch::Tensor& img, int qf) {
                return models_.fgjpeg->simulate(img, qf);
            };
        attacked = apply_attack(rs.detach(), *attack, ctx);
    }
    return stabilize_gradient(attacked, rs);
}

Trainer::ViewOutputs Trainer::run_view(const torch::Tensor& view_input,
                                       const torch::Tensor& x_protected,
                                       const torch::Tensor& original,
                                       const std::vector<RectMask>& true_rects,
                                       const torch::Tensor& raster_masks, bool joint,
                                       bool run_recovery) {
    const auto h = view_input.size(2), w = view_input.size(3);
    const auto n = view_input.size(0);
    ViewOutputs out;
    out.view_input = view_input;
    std::tie(out.processed, out.features) =
        models_.preprocessor->forward_with_features(view_input);
    out.loc = models_.localizer->forward(out.processed);
    out.soft_mask = soft_rect_mask(out.loc.rect, h, w);

    auto loc_loss = loss_localize(out.soft_mask, raster_masks);
    // Confidence: cropped views target 1 unless the crop is the full frame.
    auto conf_target = torch::empty({n});
    for (std::int64_t i = 0; i < n; ++i)
        conf_target[i] = true_rects[static_cast<std::size_t>(i)].area() < 0.999 ? 1.0f : 0.0f;
    loc_loss = loc_loss + F::binary_cross_entropy(out.loc.score.clamp(1e-6, 1 - 1e-6),
                                                  conf_target);
    if (cfg_.corner_loss) loc_loss = loc_loss + l1(out.loc.rect, rects_to_tensor(true_rects));
    out.loc_loss = loc_loss;

    if (!run_recovery) return out;

    // Geometry for rectification: ideal mask during warmup, predicted mask
    // (detached) once joint.
    std::vector<RectMask> zr_rects;
    auto rect_detached = out.loc.rect.detach();
    for (std::int64_t i = 0; i < n; ++i) {
        if (joint)
            zr_rects.push_back(sanitize_rect(rect_row_to_mask(rect_detached[i], 1.0), h, w));
        else
            zr_rects.push_back(true_rects[static_cast<std::size_t>(i)]);
    }

    std::vector<torch::Tensor> padded, gts;
    for (std::int64_t i = 0; i < n; ++i) {
        const auto& zr = zr_rects[static_cast<std::size_t>(i)];
        padded.push_back(zero_pad_resize(out.processed[i], zr, {h, w}));
        if (joint) {
            // Shift the ground truth by the affine map that carries the true
            // mask onto the predicted one.
            auto aff = affine_from_masks(true_rects[static_cast<std::size_t>(i)], zr);
            gts.push_back(warp_affine(original[i], aff));
        } else {
            gts.push_back(original[i]);
        }
    }
    auto x_rect = torch::stack(padded);
    auto gt = torch::stack(gts);
    auto g_input = joint ? stabilize_gradient(x_rect, x_protected) : x_rect;
    out.recovered = models_.generator->recover(g_input);
    auto d_b_fake = models_.d_b->forward(out.recovered);
    out.rec_loss = loss_recover(out.recovered, gt, d_b_fake, cfg_.weights.eta);
    return out;
}

TrainLogRow Trainer::step(const torch::Tensor& batch, const torch::Tensor& donors) {
    TORCH_CHECK(batch.dim() == 4 && batch.size(1) == 3, "batch must be {N,3,H,W}");
    state_.step += 1;
    maybe_decay_lr();
    models_.generator->update_power_iteration(1);

    const auto n = batch.size(0);
    const auto h = batch.size(2), w = batch.size(3);
    const bool joint = state_.stage == TrainState::Stage::Joint;

    // Tamper-based augmentation on a fraction of the batch.
    auto images = batch.clone();
    FreeFormMaskParams ffm;
    ffm.max_strokes = cfg_.max_strokes;
    for (std::int64_t i = 0; i < n; ++i) {
        if (uniform(rng_, 0, 1) < cfg_.r_aug) {
            auto [augmented, plan] = t2a_augment(images[i], donors[i], rng_, ffm);
            images[i] = augmented;
        }
    }

    auto x = models_.generator->protect(images);
    auto l_prt = loss_protect(x, images, models_.d_a->forward(x), cfg_.weights.eta);

    // One shared crop mask per sample for both views.
    std::vector<RectMask> rects;
    std::vector<torch::Tensor> rasters;
    CropSpec crop;
    crop.aspect_min = cfg_.aspect_min;
    crop.aspect_max = cfg_.aspect_max;
    for (std::int64_t i = 0; i < n; ++i) {
        crop.rate = uniform(rng_, cfg_.crop_rate_min, cfg_.crop_rate_max);
        rects.push_back(sample_crop(rng_, crop, h, w));
        rasters.push_back(rasterize(rects.back(), h, w));
    }
    auto raster_masks = torch::stack(rasters);

    auto xq = cfg_.quantize ? quantize_u8(x) : x;

    // Twin attacks: two distinct roster picks when joint, clean + one attack
    // during warmup.
    std::optional<AttackSpec> attack0, attack1;
    {
        const auto m = static_cast<std::int64_t>(cfg_.roster.size());
        const auto first = uniform_int(rng_, 0, m - 1);
        auto second = first;
        if (m > 1) {
            second = uniform_int(rng_, 0, m - 2);
            if (second >= first) ++second;
        }
        if (joint) attack0 = cfg_.roster[static_cast<std::size_t>(first)];
        attack1 = cfg_.roster[static_cast<std::size_t>(second)];
    }

    auto view0_in = make_view(xq, images, rects, attack0);
    auto view1_in = make_view(xq, images, rects, attack1);

    auto v0 = run_view(view0_in, x, images, rects, raster_masks, joint, /*run_recovery=*/true);

    torch::Tensor l_rec, l_loc, l_cons;
    double feat_value = 0.0;
    ViewOutputs v1;
    if (joint) {
        v1 = run_view(view1_in, x, images, rects, raster_masks, joint, /*run_recovery=*/true);
        l_rec = 0.5 * (v0.rec_loss + v1.rec_loss);
        l_loc = 0.5 * (v0.loc_loss + v1.loc_loss);
        ConsistencyView c0{v0.features, v0.soft_mask, v0.recovered, v0.view_input, v0.processed};
        ConsistencyView c1{v1.features, v1.soft_mask, v1.recovered, v1.view_input, v1.processed};
        l_cons = loss_consistency(c0, c1);
    } else {
        // Student branch: attacked view on detached inputs; its feature
        // consistency against the clean view trains the pre-processor alone.
        auto student_in = view1_in.detach();
        auto [proc1, feats1] = models_.preprocessor->forward_with_features(student_in);
        auto l_feat = torch::zeros({}, batch.options());
        for (int k = FeatureStack::kCompareFirst; k <= FeatureStack::kCompareLast; ++k)
            l_feat = l_feat + l1(feats1.features[static_cast<std::size_t>(k)],
                                 v0.features.features[static_cast<std::size_t>(k)].detach());
        feat_value = l_feat.item<double>();
        auto drift = 0.5 * (l1(v0.processed, v0.view_input) + l1(proc1, student_in));
        l_rec = v0.rec_loss;
        l_loc = v0.loc_loss;
        l_cons = l_feat + drift;
    }

    // False-alarm supervision: originals should score S ~ 0.
    if (cfg_.false_alarm_every > 0 && state_.step % cfg_.false_alarm_every == 0) {
        auto proc_o = models_.preprocessor->forward(images.detach());
        auto loc_o = models_.localizer->forward(proc_o);
        l_loc = l_loc + F::binary_cross_entropy(loc_o.score.clamp(1e-6, 1 - 1e-6),
                                                torch::zeros({n}));
    }

    auto total = loss_total({l_prt, l_rec, l_loc, l_cons}, cfg_.weights);
    opt_main_->zero_grad();
    total.backward();
    opt_main_->step();

    // Stage transition: EMA of the twin-feature loss against the threshold,
    // with a step cap; monotone WARMUP -> JOINT.
    if (!joint) {
        state_.feat_loss_ema = state_.feat_loss_ema < 0
                                   ? feat_value
                                   : cfg_.ema_decay * state_.feat_loss_ema +
                                         (1 - cfg_.ema_decay) * feat_value;
        const auto cap = static_cast<std::int64_t>(cfg_.warmup_cap_fraction *
                                                   static_cast<double>(cfg_.total_steps));
        if (state_.feat_loss_ema < state_.threshold || state_.step >= cap) {
            state_.stage = TrainState::Stage::Joint;
            state_.transitioned = true;
        }
    }

    // Discriminators (1:1 with the generator update).
    auto [d_a_loss, g_a_unused] =
        lsgan_losses(models_.d_a->forward(images), models_.d_a->forward(x.detach()));
    opt_da_->zero_grad();
    d_a_loss.backward();
    opt_da_->step();

    auto recovered_fake = (joint ? v1.recovered : v0.recovered).detach();
    auto [d_b_loss, g_b_unused] =
        lsgan_losses(models_.d_b->forward(images), models_.d_b->forward(recovered_fake));
    opt_db_->zero_grad();
    d_b_loss.backward();
    opt_db_->step();

    // Batch metrics for the log.
    TrainLogRow row;
    row.step = state_.step;
    row.stage = joint ? TrainState::Stage::Joint : TrainState::Stage::Warmup;
    row.l_prt = l_prt.item<double>();
    row.l_rec = l_rec.item<double>();
    row.l_loc = l_loc.item<double>();
    row.l_cons = l_cons.item<double>();
    row.d_a = d_a_loss.item<double>();
    row.d_b = d_b_loss.item<double>();
    row.psnr_protect = psnr(x.detach(), images);
    const auto& loc_view = joint ? v1 : v0;
    {
        torch::NoGradGuard ng;
        double f1_sum = 0;
        auto rect_cpu = loc_view.loc.rect.detach();
        for (std::int64_t i = 0; i < n; ++i) {
            auto pred = rect_row_to_mask(rect_cpu[i], 1.0);
            if (!pred.valid()) continue;
            f1_sum += f1_score(rasterize(pred, h, w), raster_masks[i]);
        }
        row.f1 = f1_sum / static_cast<double>(n);
    }
    return row;
}

void Trainer::run(const std::vector<ImageGrid>& corpus,
                  const std::function<void(const TrainLogRow&)>& on_row,
                  const std::function<void(std::int64_t)>& on_checkpoint) {
    TORCH_CHECK(!corpus.empty(), "training corpus is empty");
    const auto n = static_cast<std::int64_t>(corpus.size());
    while (state_.step < cfg_.total_steps) {
        std::vector<torch::Tensor> items, donor_items;
        for (std::int64_t i = 0; i < cfg_.batch_size; ++i) {
            const auto idx = uniform_int(rng_, 0, n - 1);
            auto didx = idx;
            if (n > 1) {
                didx = uniform_int(rng_, 0, n - 2);
                if (didx >= idx) ++didx;
            }
            items.push_back(corpus[static_cast<std::size_t>(idx)]);
            donor_items.push_back(corpus[static_cast<std::size_t>(didx)]);
        }
        auto row = step(torch::stack(items), torch::stack(donor_items));
        if (on_row) on_row(row);
        if (on_checkpoint && cfg_.checkpoint_every > 0 &&
            state_.step % cfg_.checkpoint_every == 0 && state_.step < cfg_.total_steps)
            on_checkpoint(state_.step);
    }
    if (on_checkpoint) on_checkpoint(state_.step);
}

}  // namespace clrkit
