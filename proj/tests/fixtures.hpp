#pragma once

#include <fstream>
#include <json.hpp>
#include <string>

#include "colm/codec.hpp"

namespace colm::test {

inline nlohmann::json load_fixtures() {
    std::ifstream in(std::string(COLM_TEST_DATA) + "/fixtures.json");
    return nlohmann::json::parse(in);
}

inline ObjectSet fixture_scan(const nlohmann::json& doc, const std::string& name) {
    std::vector<Vec3> c;
    std::vector<ClassId> l;
    for (const auto& o : doc.at("scans").at(name)) {
        c.emplace_back(o[0].get<double>(), o[1].get<double>(), o[2].get<double>());
        l.push_back(o[3].get<ClassId>());
    }
    return {c, l};
}

inline codec::MapFile fixture_map(const nlohmann::json& doc) {
    codec::MapFile map;
    for (const auto& e : doc.at("map").at("entries")) {
        std::array<double, 12> v{};
        for (std::size_t k = 0; k < 12; ++k) v[k] = e.at("pose")[k].get<double>();
        map.entries.push_back({e.at("id").get<std::uint32_t>(), RigidTransform::from_row_major(v),
                               fixture_scan(doc, e.at("scan").get<std::string>())});
    }
    return map;
}

inline std::string golden_path(const std::string& file) { return std::string(COLM_TEST_DATA) + "/" + file; }

}  // namespace colm::test
