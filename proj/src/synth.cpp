#include "lumap/synth.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "lumap/error.hpp"
#include "lumap/rng.hpp"

namespace lumap {

namespace {

using ojson = nlohmann::ordered_json;

class Canvas {
public:
    Canvas(std::uint64_t w, std::uint64_t h) : w_(static_cast<std::int64_t>(w)), h_(static_cast<std::int64_t>(h)),
                                                 m_(w * h, 0) {}

    void set(std::int64_t x, std::int64_t y, std::uint8_t mat) {
        if (x >= 0 && y >= 0 && x < w_ && y < h_) m_[static_cast<std::size_t>(y * w_ + x)] = mat;
    }

    void rect(std::int64_t x0, std::int64_t y0, std::int64_t w, std::int64_t h, std::uint8_t mat) {
        for (std::int64_t y = std::max<std::int64_t>(y0, 0); y < std::min(y0 + h, h_); ++y)
            for (std::int64_t x = std::max<std::int64_t>(x0, 0); x < std::min(x0 + w, w_); ++x)
                m_[static_cast<std::size_t>(y * w_ + x)] = mat;
    }

    void ellipse(double cx, double cy, double rx, double ry, std::uint8_t mat) {
        const auto y0 = static_cast<std::int64_t>(std::floor(cy - ry));
        const auto y1 = static_cast<std::int64_t>(std::ceil(cy + ry));
        const auto x0 = static_cast<std::int64_t>(std::floor(cx - rx));
        const auto x1 = static_cast<std::int64_t>(std::ceil(cx + rx));
        for (std::int64_t y = y0; y <= y1; ++y)
            for (std::int64_t x = x0; x <= x1; ++x) {
                const double dx = (x + 0.5 - cx) / rx;
                const double dy = (y + 0.5 - cy) / ry;
                if (dx * dx + dy * dy <= 1.0) set(x, y, mat);
            }
    }

    /// Straight band of the given pixel width between two points.
    void line(double ax, double ay, double bx, double by, double width, std::uint8_t mat) {
        const double dx = bx - ax;
        const double dy = by - ay;
        const double len2 = dx * dx + dy * dy;
        const double half = width / 2.0;
        const auto x0 = static_cast<std::int64_t>(std::floor(std::min(ax, bx) - half));
        const auto x1 = static_cast<std::int64_t>(std::ceil(std::max(ax, bx) + half));
        const auto y0 = static_cast<std::int64_t>(std::floor(std::min(ay, by) - half));
        const auto y1 = static_cast<std::int64_t>(std::ceil(std::max(ay, by) + half));
        for (std::int64_t y = std::max<std::int64_t>(y0, 0); y <= std::min(y1, h_ - 1); ++y)
            for (std::int64_t x = std::max<std::int64_t>(x0, 0); x <= std::min(x1, w_ - 1); ++x) {
                const double px = x + 0.5 - ax;
                const double py = y + 0.5 - ay;
                const double t = std::clamp((px * dx + py * dy) / len2, 0.0, 1.0);
                const double ex = px - t * dx;
                const double ey = py - t * dy;
                if (ex * ex + ey * ey <= half * half) set(x, y, mat);
            }
    }

    std::int64_t w() const { return w_; }
    std::int64_t h() const { return h_; }
    std::vector<std::uint8_t>& data() { return m_; }

private:
    std::int64_t w_;
    std::int64_t h_;
    std::vector<std::uint8_t> m_;
};

std::uint8_t pick(Rng& rng, const std::vector<std::uint8_t>& from) {
    return from[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(from.size()) - 1))];
}

/// Point on the border of the canvas, walking the perimeter.
std::pair<double, double> border_point(Rng& rng, double w, double h) {
    const double t = rng.uniform() * 2.0 * (w + h);
    if (t < w) return {t, 0.0};
    if (t < w + h) return {w, t - w};
    if (t < 2.0 * w + h) return {t - w - h, h};
    return {0.0, t - 2.0 * w - h};
}

std::uint64_t scene_seed(std::uint64_t corpus_seed, std::size_t index) {
    return hash_key({corpus_seed, static_cast<std::uint64_t>(index)});
}

}  // namespace

std::vector<Material> SceneSpec::default_materials() {
    using namespace land_use;
    return {
        {"cultivated", kCultivated, {280, 360, 300, 600}, 20},
        {"garden", kGarden, {280, 360, 300, 800}, 20},
        {"forest", kForest, {200, 280, 210, 760}, 20},
        {"grass", kGrass, {200, 280, 210, 420}, 20},
        {"water", kWater, {300, 320, 240, 100}, 15},
        {"roof", kResidential, {620, 640, 660, 720}, 70},
        {"road", kRoad, {460, 470, 480, 500}, 15},
        {"bare", kBare, {620, 640, 660, 480}, 70},
        {"agri_facility", kAgriFacility, {760, 780, 800, 820}, 30},
        {"shadow", kResidential, {300, 320, 240, 380}, 15},
    };
}

void SceneSpec::validate() const {
    if (width == 0 || height == 0) throw_validation("scene must be at least 1x1");
    scheme.validate();
    if (materials.size() < 2) throw_validation("scene needs at least 2 materials");
    std::vector<bool> seen(scheme.size(), false);
    for (const auto& m : materials) {
        if (m.label >= scheme.size()) throw_validation("material '" + m.name + "' has label outside the scheme");
        if (m.sigma < 0) throw_validation("material '" + m.name + "' has negative sigma");
        for (double v : m.mean)
            if (v < 0 || v > kSensorMax) throw_validation("material '" + m.name + "' mean outside sensor range");
        seen[m.label] = true;
    }
    if (std::count(seen.begin(), seen.end(), true) < 2) throw_validation("scene needs at least 2 classes");
    auto check = [&](const std::vector<std::uint8_t>& v, const char* what) {
        if (v.empty()) throw_validation(std::string(what) + " material list is empty");
        for (auto m : v)
            if (m >= materials.size()) throw_validation(std::string(what) + " material index out of range");
    };
    check(background_materials, "background");
    if (rectangles > 0) check(rectangle_materials, "rectangle");
    if (blobs > 0) check(blob_materials, "blob");
    if (regions == 0) throw_validation("scene needs at least one background region");
    const bool defaults = materials.size() > material::kShadow;
    if ((buildings > 0 || roads > 0) && !defaults)
        throw_validation("roads and buildings need the default material set");
}

ojson SceneSpec::to_json() const {
    ojson j;
    j["width"] = width;
    j["height"] = height;
    j["regions"] = regions;
    j["rectangles"] = rectangles;
    j["blobs"] = blobs;
    j["roads"] = roads;
    j["buildings"] = buildings;
    auto mats = ojson::array();
    for (const auto& m : materials)
        mats.push_back({{"name", m.name}, {"label", m.label}, {"mean", m.mean}, {"sigma", m.sigma}});
    j["materials"] = std::move(mats);
    return j;
}

Scene generate_scene(const SceneSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    Canvas canvas(spec.width, spec.height);
    const double W = static_cast<double>(spec.width);
    const double H = static_cast<double>(spec.height);
    const double scale = std::sqrt(W * H) / 512.0;

    // Background: nearest-seed Voronoi cells.
    struct Seed {
        double x, y;
        std::uint8_t mat;
    };
    std::vector<Seed> seeds;
    for (std::size_t i = 0; i < spec.regions; ++i)
        seeds.push_back({rng.uniform(0, W), rng.uniform(0, H), pick(rng, spec.background_materials)});
    auto& m = canvas.data();
    for (std::int64_t y = 0; y < canvas.h(); ++y)
        for (std::int64_t x = 0; x < canvas.w(); ++x) {
            double best = 1e300;
            std::uint8_t mat = 0;
            for (const auto& s : seeds) {
                const double d = (x + 0.5 - s.x) * (x + 0.5 - s.x) + (y + 0.5 - s.y) * (y + 0.5 - s.y);
                if (d < best) {
                    best = d;
                    mat = s.mat;
                }
            }
            m[static_cast<std::size_t>(y * canvas.w() + x)] = mat;
        }

    for (std::size_t i = 0; i < spec.rectangles; ++i) {
        const auto w = static_cast<std::int64_t>(rng.uniform(20, 90) * scale);
        const auto h = static_cast<std::int64_t>(rng.uniform(20, 90) * scale);
        const auto x = static_cast<std::int64_t>(rng.uniform(-0.1 * W, W));
        const auto y = static_cast<std::int64_t>(rng.uniform(-0.1 * H, H));
        canvas.rect(x, y, std::max<std::int64_t>(w, 1), std::max<std::int64_t>(h, 1),
                    pick(rng, spec.rectangle_materials));
    }
    for (std::size_t i = 0; i < spec.blobs; ++i) {
        const double rx = rng.uniform(12, 60) * scale;
        const double ry = rng.uniform(12, 60) * scale;
        canvas.ellipse(rng.uniform(0, W), rng.uniform(0, H), rx, ry, pick(rng, spec.blob_materials));
    }
    // Buildings: a roof with a shadow cast towards the lower right.
    for (std::size_t i = 0; i < spec.buildings; ++i) {
        const auto w = static_cast<std::int64_t>(rng.uniform(10, 30));
        const auto h = static_cast<std::int64_t>(rng.uniform(10, 30));
        const auto x = static_cast<std::int64_t>(rng.uniform(0, W));
        const auto y = static_cast<std::int64_t>(rng.uniform(0, H));
        const auto sx = static_cast<std::int64_t>(rng.uniform(5, 12));
        const auto sy = static_cast<std::int64_t>(rng.uniform(5, 12));
        canvas.rect(x + sx, y + sy, w, h, material::kShadow);
        canvas.rect(x, y, w, h, material::kRoof);
    }
    // Roads: 3-7 px lines from border to border, crossing tile seams.
    for (std::size_t i = 0; i < spec.roads; ++i) {
        const auto [ax, ay] = border_point(rng, W, H);
        auto [bx, by] = border_point(rng, W, H);
        if (std::abs(ax - bx) + std::abs(ay - by) < 1.0) {
            bx = W - ax;
            by = H - ay;
        }
        const double width = static_cast<double>(rng.integer(3, 7));
        canvas.line(ax, ay, bx, by, width, material::kRoad);
    }

    Scene scene;
    RasterHeader h;
    h.width = spec.width;
    h.height = spec.height;
    h.dtype = DType::U16;
    h.geotransform = {0.0, 2.0, 0.0, 0.0, 0.0, -2.0};
    h.band_names = raw_band_names();
    scene.image = RasterGrid::zeros(h);
    scene.labels = ClassMap::filled(spec.width, spec.height, 0);
    scene.labels.geotransform = h.geotransform;

    auto px = scene.image.samples_as<std::uint16_t>();
    const std::size_t n = spec.width * spec.height;
    for (std::size_t i = 0; i < n; ++i) {
        const Material& mat = spec.materials[m[i]];
        scene.labels.labels[i] = mat.label;
        for (std::size_t b = 0; b < 4; ++b) {
            const double v = mat.mean[b] + mat.sigma * rng.normal();
            px[b * n + i] = static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, kSensorMax)));
        }
    }
    scene.materials = std::move(m);
    return scene;
}

std::vector<std::size_t> CorpusManifest::split_indices(const std::string& split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < scenes.size(); ++i)
        if (scenes[i].split == split) out.push_back(i);
    return out;
}

ojson CorpusManifest::to_json() const {
    ojson j;
    auto arr = ojson::array();
    for (const auto& s : scenes) arr.push_back({{"image", s.image}, {"labels", s.labels}, {"split", s.split}});
    j["scenes"] = std::move(arr);
    j["norm_stats"] = norm_stats.to_json();
    j["class_scheme"] = class_scheme.to_json();
    j["seed"] = seed;
    j["class_histogram"] = class_histogram;
    j["scene_spec"] = scene_spec;
    return j;
}

void CorpusManifest::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw_io("cannot write manifest " + path.string());
    out << to_json().dump(2) << '\n';
    if (!out) throw_io("write failed on " + path.string());
}

CorpusManifest CorpusManifest::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw_io("cannot open manifest " + path.string());
    CorpusManifest m;
    m.dir = path.parent_path();
    try {
        const auto j = ojson::parse(in);
        for (const auto& s : j.at("scenes")) {
            m.scenes.push_back({s.at("image").get<std::string>(), s.at("labels").get<std::string>(),
                                s.at("split").get<std::string>()});
            if (m.scenes.back().split != "train" && m.scenes.back().split != "val")
                throw_config("manifest " + path.string() + ": split must be train or val");
        }
        m.norm_stats = NormStats::from_json(j.at("norm_stats"));
        m.class_scheme = ClassScheme::from_json(j.at("class_scheme"));
        m.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("class_histogram")) m.class_histogram = j.at("class_histogram").get<std::vector<std::uint64_t>>();
        if (j.contains("scene_spec")) m.scene_spec = j.at("scene_spec");
    } catch (const nlohmann::json::exception& e) {
        throw_config("malformed manifest " + path.string() + ": " + e.what());
    }
    return m;
}

std::size_t validation_count(std::size_t n_scenes) { return (n_scenes * 5 + 99) / 100; }

CorpusManifest generate_corpus(const SceneSpec& tmpl, std::size_t n_scenes, std::uint64_t seed,
                               const std::filesystem::path& dir, std::size_t workers) {
    if (n_scenes < 2) throw_validation("corpus needs at least 2 scenes");
    tmpl.validate();
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw_io("cannot create corpus directory " + dir.string() + ": " + ec.message());

    CorpusManifest man;
    man.dir = dir;
    man.seed = seed;
    man.class_scheme = tmpl.scheme;
    man.scene_spec = tmpl.to_json();

    // Scene-level split: the last ceil(5% n) scenes of a seeded permutation.
    std::vector<std::size_t> order(n_scenes);
    for (std::size_t i = 0; i < n_scenes; ++i) order[i] = i;
    Rng split_rng(hash_key({seed, 0x5eedULL}));
    split_rng.shuffle(order);
    std::vector<std::string> split(n_scenes, "train");
    const std::size_t n_val = validation_count(n_scenes);
    for (std::size_t i = n_scenes - n_val; i < n_scenes; ++i) split[order[i]] = "val";

    std::vector<RasterGrid> images(n_scenes);
    std::vector<std::vector<std::uint64_t>> hist(n_scenes, std::vector<std::uint64_t>(tmpl.scheme.size(), 0));
    for (std::size_t i = 0; i < n_scenes; ++i) {
        char name[64];
        std::snprintf(name, sizeof name, "scene_%03zu", i);
        man.scenes.push_back({std::string(name) + "_image.rstr", std::string(name) + "_labels.rstr", split[i]});
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n_scenes) return;
            try {
                SceneSpec spec = tmpl;
                spec.seed = scene_seed(seed, i);
                Scene scene = generate_scene(spec);
                write_raster(scene.image, man.image_path(i));
                write_class_map(scene.labels, man.labels_path(i));
                for (auto l : scene.labels.labels) ++hist[i][l];
                images[i] = std::move(scene.image);
            } catch (...) {
                std::lock_guard lock(failure_mu);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };
    const std::size_t nthreads = std::clamp<std::size_t>(workers, 1, n_scenes);
    std::vector<std::thread> threads;
    for (std::size_t t = 1; t < nthreads; ++t) threads.emplace_back(work);
    work();
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);

    man.class_histogram.assign(tmpl.scheme.size(), 0);
    for (const auto& h : hist)
        for (std::size_t c = 0; c < h.size(); ++c) man.class_histogram[c] += h[c];

    std::vector<const RasterGrid*> train_images;
    for (std::size_t i = 0; i < n_scenes; ++i)
        if (split[i] == "train") train_images.push_back(&images[i]);
    man.norm_stats = compute_norm_stats(train_images);
    man.save(dir / "manifest.json");
    return man;
}

}  // namespace lumap
