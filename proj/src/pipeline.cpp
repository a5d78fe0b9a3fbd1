#include "lumap/pipeline.hpp"

#include <sys/resource.h>

#include <atomic>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <exception>
#include <mutex>
#include <thread>

#include "lumap/error.hpp"

namespace lumap {

namespace {

struct Done {
    std::size_t k;
    ClassMap tile;
};

/// Bounded hand-off from workers to the writer.
class ResultQueue {
public:
    explicit ResultQueue(std::size_t capacity) : capacity_(capacity) {}

    bool push(Done d) {
        std::unique_lock lock(mu_);
        not_full_.wait(lock, [&] { return q_.size() < capacity_ || closed_; });
        if (closed_) return false;
        q_.push_back(std::move(d));
        not_empty_.notify_one();
        return true;
    }

    /// Empty optional once every producer has finished and the queue drained.
    std::optional<Done> pop() {
        std::unique_lock lock(mu_);
        not_empty_.wait(lock, [&] { return !q_.empty() || producers_ == 0 || closed_; });
        if (closed_ || q_.empty()) return std::nullopt;
        Done d = std::move(q_.front());
        q_.pop_front();
        not_full_.notify_one();
        return d;
    }

    void add_producer() {
        std::lock_guard lock(mu_);
        ++producers_;
    }

    void producer_done() {
        std::lock_guard lock(mu_);
        --producers_;
        not_empty_.notify_all();
    }

    void close() {
        std::lock_guard lock(mu_);
        closed_ = true;
        not_full_.notify_all();
        not_empty_.notify_all();
    }

private:
    std::size_t capacity_;
    std::deque<Done> q_;
    std::size_t producers_ = 0;
    bool closed_ = false;
    std::mutex mu_;
    std::condition_variable not_full_;
    std::condition_variable not_empty_;
};

std::string tile_name(const TilePlan& plan, std::size_t k) {
    const TileIndex t = plan.index(k);
    return "tile " + std::to_string(k) + " (" + std::to_string(t.row) + "," + std::to_string(t.col) + ")";
}

ChannelStack tile_stack(const RasterReader& reader, const InferenceJob& job, const TilePlan& plan, std::size_t k) {
    const RasterGrid raw = extract_tile(reader, plan, k);
    if (is_prebuilt_stack(raw, job.mode)) return stack_passthrough(raw, job.mode);
    return build_channel_stack(raw, job.mode, *job.norm);
}

}  // namespace

void InferenceJob::validate() const {
    spec.validate();
    if (workers == 0) throw_config("workers must be at least 1");
    if (!backend) throw_config("inference job has no backend");
}

nlohmann::ordered_json RunSummary::to_json() const {
    nlohmann::ordered_json j;
    j["tiles"] = tiles;
    j["seconds"] = seconds;
    j["px_per_s"] = px_per_s;
    j["pixels"] = pixels;
    j["workers"] = workers;
    j["peak_rss_bytes"] = peak_rss_bytes;
    j["config"] = config;
    return j;
}

std::uint64_t peak_rss_bytes() {
    rusage ru{};
    ::getrusage(RUSAGE_SELF, &ru);
    return static_cast<std::uint64_t>(ru.ru_maxrss) * 1024;
}

RunSummary run_inference(const InferenceJob& job, const TilePlan& plan, const TileConsumer& consume) {
    job.validate();
    const auto start = std::chrono::steady_clock::now();
    const RasterReader reader(job.image);
    const RasterHeader& h = reader.header();
    if (plan.width != h.width || plan.height != h.height)
        throw_validation("tile plan does not match image " + job.image.string());
    if (!is_prebuilt_stack(h, job.mode)) {
        if (h.band_names != raw_band_names())
            throw_validation("image " + job.image.string() + " is neither B,G,R,NIR nor a prebuilt " +
                             std::string(to_string(job.mode)) + " stack");
        if (!job.norm) throw_config("raw imagery needs normalisation stats (model or manifest)");
    }

    const std::size_t total = plan.count();
    const std::size_t nworkers = std::min(job.workers, total);

    // Backends are created up front so construction errors surface here.
    std::vector<std::shared_ptr<Backend>> backends;
    backends.push_back(job.backend());
    for (std::size_t w = 1; w < nworkers; ++w)
        backends.push_back(backends.front()->thread_safe() ? backends.front() : job.backend());

    ResultQueue queue(nworkers);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto fail = [&](std::exception_ptr e) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = e;
        stop = true;
        queue.close();
    };

    auto worker = [&](std::size_t w) {
        Backend& backend = *backends[w];
        while (!stop) {
            const std::size_t k = next.fetch_add(1);
            if (k >= total) break;
            try {
                ChannelStack tile = tile_stack(reader, job, plan, k);
                ClassMap labels = predict_tile(backend, tile, {k, &plan});
                if (!tile.valid.empty())
                    for (std::size_t i = 0; i < tile.pixels(); ++i)
                        if (!tile.valid[i]) labels.labels[i] = kIgnore;
                if (!queue.push({k, std::move(labels)})) break;
            } catch (const Error& e) {
                fail(std::make_exception_ptr(Error(e.kind(), tile_name(plan, k) + ": " + e.what())));
                break;
            } catch (...) {
                fail(std::current_exception());
                break;
            }
        }
        queue.producer_done();
    };

    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < nworkers; ++w) queue.add_producer();
    for (std::size_t w = 0; w < nworkers; ++w) threads.emplace_back(worker, w);

    std::size_t done = 0;
    try {
        while (auto d = queue.pop()) {
            consume(d->k, d->tile);
            ++done;
            if (job.progress) {
                const TileIndex t = plan.index(d->k);
                std::fprintf(stderr, "tile %zu/%zu done (%zu/%zu)\n", t.row, t.col, done, total);
            }
        }
    } catch (...) {
        fail(std::current_exception());
    }
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);
    if (done != total) throw_backend("inference finished with " + std::to_string(done) + " of " +
                                     std::to_string(total) + " tiles");

    RunSummary s;
    s.tiles = total;
    s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    s.pixels = plan.width * plan.height;
    s.px_per_s = s.seconds > 0 ? static_cast<double>(s.pixels) / s.seconds : 0.0;
    s.workers = nworkers;
    s.peak_rss_bytes = peak_rss_bytes();
    s.config = job.config;
    return s;
}

void write_center(const TilePlan& plan, std::size_t k, const ClassMap& tile, ClassMap& out) {
    const auto t = static_cast<std::uint64_t>(plan.spec.tile);
    if (tile.width != t || tile.height != t) throw_validation(tile_name(plan, k) + " has the wrong size");
    const Window c = center_window(plan, k);
    const auto p = static_cast<std::size_t>(plan.spec.pad);
    for (std::int64_t y = 0; y < c.h; ++y) {
        const std::uint8_t* src = tile.labels.data() + (p + static_cast<std::size_t>(y)) * t + p;
        std::uint8_t* dst = out.labels.data() + static_cast<std::size_t>(c.y0 + y) * out.width + static_cast<std::size_t>(c.x0);
        std::copy_n(src, c.w, dst);
    }
}

Stitcher::Stitcher(const TilePlan& plan)
    : plan_(plan), out_(ClassMap::filled(plan.width, plan.height, kIgnore)), seen_(plan.count(), false) {}

void Stitcher::add(std::size_t k, const ClassMap& tile) {
    if (k >= plan_.count()) throw_validation("prediction for unknown tile index " + std::to_string(k));
    if (seen_[k]) throw_validation("duplicate prediction for " + tile_name(plan_, k));
    seen_[k] = true;
    write_center(plan_, k, tile, out_);
}

ClassMap Stitcher::finish() {
    for (std::size_t k = 0; k < seen_.size(); ++k)
        if (!seen_[k]) throw_validation("missing prediction for " + tile_name(plan_, k));
    return std::move(out_);
}

ClassMap stitch(const std::vector<std::pair<std::size_t, ClassMap>>& predictions, const TilePlan& plan) {
    Stitcher s(plan);
    for (const auto& [k, tile] : predictions) s.add(k, tile);
    return s.finish();
}

InferenceResult infer_map(const InferenceJob& job) {
    job.validate();
    const RasterHeader header = RasterReader(job.image).header();
    const TilePlan plan = plan_tiles(header.width, header.height, job.spec);

    std::optional<RasterWriter> writer;
    if (!job.output.empty()) {
        RasterHeader oh;
        oh.width = header.width;
        oh.height = header.height;
        oh.dtype = DType::U8;
        oh.nodata = static_cast<double>(kIgnore);
        oh.geotransform = header.geotransform;
        oh.band_names = {"label"};
        writer.emplace(job.output, oh);
    }
    std::optional<Stitcher> stitcher;
    if (job.keep_map) stitcher.emplace(plan);

    std::vector<std::uint8_t> buf;
    const auto pad = static_cast<std::size_t>(plan.spec.pad);
    const auto t = static_cast<std::size_t>(plan.spec.tile);
    InferenceResult result;
    result.summary = run_inference(job, plan, [&](std::size_t k, const ClassMap& tile) {
        if (stitcher) stitcher->add(k, tile);
        if (writer) {
            const Window c = center_window(plan, k);
            buf.resize(static_cast<std::size_t>(c.area()));
            for (std::int64_t y = 0; y < c.h; ++y)
                std::copy_n(tile.labels.data() + (pad + static_cast<std::size_t>(y)) * t + pad, c.w,
                            buf.data() + y * c.w);
            writer->write_labels(buf, c);
        }
    });
    if (writer) writer->close();
    if (stitcher) {
        result.map = stitcher->finish();
        result.map.geotransform = header.geotransform;
    }
    return result;
}

}  // namespace lumap
