#include "lumap/evaluate.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "lumap/error.hpp"

namespace lumap {

namespace {

using ojson = nlohmann::ordered_json;

void accumulate(ConfusionMatrix& cm, std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
    const std::size_t k = cm.classes;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const std::uint8_t t = truth[i];
        const std::uint8_t p = pred[i];
        if (t == kIgnore || p == kIgnore) continue;
        if (t >= k || p >= k)
            throw_validation("label " + std::to_string(t >= k ? t : p) + " outside K=" + std::to_string(k));
        ++cm.counts[t * k + p];
    }
}

ojson accuracies(const std::vector<double>& v) {
    auto arr = ojson::array();
    for (double a : v) arr.push_back(a < 0 ? ojson(nullptr) : ojson(a));
    return arr;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
}

std::uint64_t ConfusionMatrix::correct() const {
    std::uint64_t t = 0;
    for (std::size_t c = 0; c < classes; ++c) t += at(c, c);
    return t;
}

ConfusionMatrix& ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.classes != classes) throw_validation("cannot merge confusion matrices of different K");
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
    return *this;
}

ConfusionMatrix confusion(const ClassMap& pred, const ClassMap& truth, std::size_t num_classes) {
    if (pred.width != truth.width || pred.height != truth.height)
        throw_validation("prediction is " + std::to_string(pred.width) + "x" + std::to_string(pred.height) +
                         ", truth is " + std::to_string(truth.width) + "x" + std::to_string(truth.height));
    if (num_classes < 2 || num_classes > 255) throw_validation("K must be in [2, 255]");
    ConfusionMatrix cm(num_classes);
    accumulate(cm, pred.labels, truth.labels);
    return cm;
}

ConfusionMatrix confusion_streamed(const std::filesystem::path& pred, const std::filesystem::path& truth,
                                   std::size_t num_classes, std::uint64_t rows_per_block) {
    const RasterReader pr(pred);
    const RasterReader tr(truth);
    const auto& ph = pr.header();
    const auto& th = tr.header();
    if (ph.width != th.width || ph.height != th.height)
        throw_validation("prediction and truth rasters differ in size");
    for (const auto* h : {&ph, &th})
        if (h->bands() != 1 || h->dtype != DType::U8) throw_validation("label rasters must be single-band u8");
    if (rows_per_block == 0) throw_validation("rows_per_block must be positive");
    ConfusionMatrix cm(num_classes);
    for (std::uint64_t y = 0; y < ph.height; y += rows_per_block) {
        const auto rows = static_cast<std::int64_t>(std::min(rows_per_block, ph.height - y));
        const Window w{0, static_cast<std::int64_t>(y), static_cast<std::int64_t>(ph.width), rows};
        const RasterGrid p = pr.read_window(w);
        const RasterGrid t = tr.read_window(w);
        accumulate(cm, p.samples_as<std::uint8_t>(), t.samples_as<std::uint8_t>());
    }
    return cm;
}

double overall_accuracy(const ConfusionMatrix& cm) {
    const std::uint64_t t = cm.total();
    if (t == 0) throw_validation("overall accuracy is undefined: no evaluable pixels");
    return static_cast<double>(cm.correct()) / static_cast<double>(t);
}

std::vector<double> producer_accuracy(const ConfusionMatrix& cm) {
    std::vector<double> out(cm.classes, -1.0);
    for (std::size_t t = 0; t < cm.classes; ++t) {
        std::uint64_t row = 0;
        for (std::size_t p = 0; p < cm.classes; ++p) row += cm.at(t, p);
        if (row) out[t] = static_cast<double>(cm.at(t, t)) / static_cast<double>(row);
    }
    return out;
}

std::vector<double> user_accuracy(const ConfusionMatrix& cm) {
    std::vector<double> out(cm.classes, -1.0);
    for (std::size_t p = 0; p < cm.classes; ++p) {
        std::uint64_t col = 0;
        for (std::size_t t = 0; t < cm.classes; ++t) col += cm.at(t, p);
        if (col) out[p] = static_cast<double>(cm.at(p, p)) / static_cast<double>(col);
    }
    return out;
}

bool in_seam_band(const TilePlan& plan, std::int64_t band, std::uint64_t x, std::uint64_t y) {
    const std::int64_t s = plan.spec.stride;
    auto near = [&](std::uint64_t v, std::uint64_t extent) {
        // nearest interior seam position (a multiple of s in (0, extent))
        const auto iv = static_cast<std::int64_t>(v);
        const std::int64_t below = (iv / s) * s;
        const std::int64_t above = below + s;
        if (below > 0 && iv - below < band) return true;
        return above < static_cast<std::int64_t>(extent) && above - iv <= band;
    };
    return near(x, plan.width) || near(y, plan.height);
}

ConfusionMatrix boundary_confusion(const ClassMap& pred, const ClassMap& truth, const TilePlan& plan,
                                   std::int64_t band, std::size_t num_classes) {
    if (band < 1) throw_validation("boundary band must be at least 1 pixel");
    if (pred.width != truth.width || pred.height != truth.height || plan.width != truth.width ||
        plan.height != truth.height)
        throw_validation("boundary accuracy: prediction, truth and plan must share one extent");
    ConfusionMatrix cm(num_classes);
    for (std::uint64_t y = 0; y < truth.height; ++y)
        for (std::uint64_t x = 0; x < truth.width; ++x) {
            if (!in_seam_band(plan, band, x, y)) continue;
            const std::uint8_t t = truth.at(x, y);
            const std::uint8_t p = pred.at(x, y);
            if (t == kIgnore || p == kIgnore) continue;
            if (t >= num_classes || p >= num_classes) throw_validation("label outside class range");
            ++cm.counts[t * num_classes + p];
        }
    return cm;
}

double boundary_accuracy(const ClassMap& pred, const ClassMap& truth, const TilePlan& plan, std::int64_t band,
                         std::size_t num_classes) {
    const ConfusionMatrix cm = boundary_confusion(pred, truth, plan, band, num_classes);
    if (cm.total() == 0) throw_validation("boundary band contains no evaluable pixels");
    return overall_accuracy(cm);
}

ojson report_json(const ConfusionMatrix& cm, const ClassScheme& scheme, const ojson& metadata) {
    if (scheme.size() != cm.classes) throw_validation("class scheme and matrix disagree on K");
    ojson j;
    auto names = ojson::array();
    for (const auto& c : scheme.classes) names.push_back(c.name);
    j["class_names"] = std::move(names);
    auto rows = ojson::array();
    for (std::size_t t = 0; t < cm.classes; ++t) {
        auto row = ojson::array();
        for (std::size_t p = 0; p < cm.classes; ++p) row.push_back(cm.at(t, p));
        rows.push_back(std::move(row));
    }
    j["counts"] = std::move(rows);
    j["total"] = cm.total();
    j["overall_accuracy"] = cm.total() ? ojson(overall_accuracy(cm)) : ojson(nullptr);
    j["producer_accuracy"] = accuracies(producer_accuracy(cm));
    j["user_accuracy"] = accuracies(user_accuracy(cm));
    j["metadata"] = metadata;
    return j;
}

void report(const ConfusionMatrix& cm, const ClassScheme& scheme, const ojson& metadata,
            const std::filesystem::path& path) {
    const ojson j = report_json(cm, scheme, metadata);
    auto json_path = path;
    json_path.replace_extension(".json");
    auto csv_path = path;
    csv_path.replace_extension(".csv");
    {
        std::ofstream out(json_path);
        if (!out) throw_io("cannot write report " + json_path.string());
        out << j.dump(2) << '\n';
        if (!out) throw_io("write failed on " + json_path.string());
    }
    std::ofstream csv(csv_path);
    if (!csv) throw_io("cannot write report " + csv_path.string());
    csv << "truth\\pred";
    for (const auto& c : scheme.classes) csv << ',' << csv_escape(c.name);
    csv << ",producer_accuracy\n";
    const auto prod = producer_accuracy(cm);
    const auto user = user_accuracy(cm);
    csv << std::setprecision(17);
    for (std::size_t t = 0; t < cm.classes; ++t) {
        csv << csv_escape(scheme.classes[t].name);
        for (std::size_t p = 0; p < cm.classes; ++p) csv << ',' << cm.at(t, p);
        csv << ',';
        if (prod[t] >= 0) csv << prod[t];
        csv << '\n';
    }
    csv << "user_accuracy";
    for (double u : user) {
        csv << ',';
        if (u >= 0) csv << u;
    }
    csv << ",\n";
    csv << "overall_accuracy";
    if (cm.total()) csv << ',' << overall_accuracy(cm);
    csv << '\n';
    if (!csv) throw_io("write failed on " + csv_path.string());
}

ConfusionMatrix read_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw_io("cannot open report " + path.string());
    try {
        const auto j = ojson::parse(in);
        const auto rows = j.at("counts").get<std::vector<std::vector<std::uint64_t>>>();
        ConfusionMatrix cm(rows.size());
        for (std::size_t t = 0; t < rows.size(); ++t) {
            if (rows[t].size() != rows.size()) throw_io("report " + path.string() + ": counts are not square");
            for (std::size_t p = 0; p < rows.size(); ++p) cm.counts[t * cm.classes + p] = rows[t][p];
        }
        return cm;
    } catch (const nlohmann::json::exception& e) {
        throw_io("malformed report " + path.string() + ": " + e.what());
    }
}

}  // namespace lumap
