#include "lumap/class_scheme.hpp"

#include <set>

#include "lumap/error.hpp"

namespace lumap {

void ClassScheme::validate() const {
    if (classes.size() < 2) throw_validation("class scheme needs at least 2 classes");
    if (classes.size() > 255) throw_validation("class scheme supports at most 255 classes (255 is IGNORE)");
    std::set<std::string> names;
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (classes[i].id != i) throw_validation("class ids must be contiguous from 0");
        if (!names.insert(classes[i].name).second)
            throw_validation("duplicate class name '" + classes[i].name + "'");
    }
}

ClassScheme ClassScheme::land_use9() {
    return ClassScheme{{
        {0, "cultivated land", {255, 235, 120}},
        {1, "garden land", {190, 120, 200}},
        {2, "forest land", {20, 110, 40}},
        {3, "grass land", {140, 210, 90}},
        {4, "water body", {30, 90, 230}},
        {5, "residential area", {220, 40, 40}},
        {6, "road", {120, 120, 120}},
        {7, "bare land", {200, 170, 130}},
        {8, "agricultural facilities", {250, 150, 30}},
    }};
}

nlohmann::ordered_json ClassScheme::to_json() const {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& c : classes) {
        nlohmann::ordered_json e;
        e["id"] = c.id;
        e["name"] = c.name;
        e["color"] = c.color;
        arr.push_back(e);
    }
    return arr;
}

ClassScheme ClassScheme::from_json(const nlohmann::ordered_json& j) {
    ClassScheme s;
    try {
        for (const auto& e : j) {
            s.classes.push_back({e.at("id").get<std::uint8_t>(), e.at("name").get<std::string>(),
                                 e.at("color").get<Rgb>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw_config(std::string("malformed class scheme: ") + e.what());
    }
    s.validate();
    return s;
}

void check_labels(const ClassMap& map, std::size_t num_classes) {
    for (std::size_t i = 0; i < map.labels.size(); ++i) {
        const std::uint8_t v = map.labels[i];
        if (v != kIgnore && v >= num_classes)
            throw_validation("label " + std::to_string(v) + " at (" + std::to_string(i % map.width) + "," +
                             std::to_string(i / map.width) + ") exceeds K=" + std::to_string(num_classes));
    }
}

}  // namespace lumap
