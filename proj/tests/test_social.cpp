#include <cmath>

#include "doctest.h"
#include "trajcast/social.hpp"
#include "trajcast/util.hpp"

using namespace traj;

namespace {

SocialConfig square_cfg() {
    SocialConfig c;
    c.kind = SocialKind::SquareGrid;
    return c;
}
SocialConfig circle_cfg() {
    SocialConfig c;
    c.kind = SocialKind::CircularMap;
    return c;
}
SocialConfig angular_cfg() {
    SocialConfig c;
    c.kind = SocialKind::AngularGrid;
    return c;
}

}  // namespace

TEST_CASE("square_occupancy: empty grid, extent, point-in-cell oracle") {
    const auto zeros = square_occupancy({0, 0}, {}, square_cfg());
    CHECK(zeros.size() == 100);
    for (float v : zeros) CHECK(v == 0.0f);

    // the 10x10 grid of 0.5 m cells covers a 5 m x 5 m square
    CHECK(square_occupancy({0, 0}, {{2.49f, 0.0f}}, square_cfg())[9 * 10 + 5] == 1.0f);
    float total = 0.0f;
    for (float v : square_occupancy({0, 0}, {{2.51f, 0.0f}}, square_cfg())) total += v;
    CHECK(total == 0.0f);

    const auto grid = square_occupancy({0, 0}, {{0.1f, 0.1f}}, square_cfg());
    int hits = 0;
    size_t hit_index = 0;
    for (size_t i = 0; i < grid.size(); ++i)
        if (grid[i] != 0.0f) {
            ++hits;
            hit_index = i;
        }
    CHECK(hits == 1);
    // brute-force scan over every cell's world-space extent
    const SocialConfig cfg = square_cfg();
    size_t oracle_index = 0;
    bool found = false;
    for (int cx = 0; cx < cfg.l && !found; ++cx)
        for (int cy = 0; cy < cfg.l && !found; ++cy) {
            const float lo_x = (cx - cfg.l / 2) * cfg.cell_side;
            const float lo_y = (cy - cfg.l / 2) * cfg.cell_side;
            if (0.1f >= lo_x && 0.1f < lo_x + cfg.cell_side && 0.1f >= lo_y &&
                0.1f < lo_y + cfg.cell_side) {
                oracle_index = static_cast<size_t>(cx) * cfg.l + cy;
                found = true;
            }
        }
    REQUIRE(found);
    CHECK(hit_index == oracle_index);
}

TEST_CASE("circular_occupancy: empty map, ring/sector membership, out of range") {
    const auto zeros = circular_occupancy({0, 0}, {}, circle_cfg());
    CHECK(zeros.size() == 48);
    for (float v : zeros) CHECK(v == 0.0f);

    const auto one = circular_occupancy({0, 0}, {{0.3f, 0.0f}}, circle_cfg());
    CHECK(one[0] == 1.0f);  // ring 0 (0, 0.5], quadrant 0 [0deg, 90deg)
    float total = 0.0f;
    for (float v : one) total += v;
    CHECK(total == 1.0f);

    // membership oracle across rings and quadrants
    RngStream rng(8);
    const SocialConfig cfg = circle_cfg();
    for (int trial = 0; trial < 200; ++trial) {
        const double r = rng.uniform(0.01, 7.0);
        const double ang = rng.uniform(0.0, 2.0 * M_PI);
        const Vec2 nb{static_cast<float>(r * std::cos(ang)), static_cast<float>(r * std::sin(ang))};
        const auto feat = circular_occupancy({0, 0}, {nb}, cfg);
        const double actual_r = std::hypot(static_cast<double>(nb.x), static_cast<double>(nb.y));
        double actual_ang = std::atan2(static_cast<double>(nb.y), static_cast<double>(nb.x));
        if (actual_ang < 0) actual_ang += 2.0 * M_PI;
        float sum = 0.0f;
        for (float v : feat) sum += v;
        if (actual_r > cfg.c * cfg.ring_spacing || actual_r <= 0.0) {
            CHECK(sum == 0.0f);
        } else {
            REQUIRE(sum == 1.0f);
            int ring = static_cast<int>(std::ceil(actual_r / cfg.ring_spacing)) - 1;
            int quad = std::min(3, static_cast<int>(actual_ang / (M_PI / 2.0)));
            CHECK(feat[static_cast<size_t>(ring) * 4 + quad] == 1.0f);
        }
    }

    const auto far = circular_occupancy({0, 0}, {{10.0f, 0.0f}}, circle_cfg());
    for (float v : far) CHECK(v == 0.0f);
}

TEST_CASE("angular_grid: length, free space, sector-scan oracle") {
    const auto free_space = angular_grid({0, 0}, {}, angular_cfg());
    CHECK(free_space.size() == 45);  // int(360 / 8)
    for (float v : free_space) CHECK(v == 6.0f);

    const auto one = angular_grid({0, 0}, {{2.0f, 0.0f}}, angular_cfg());
    CHECK(one[0] == doctest::Approx(2.0f));
    for (size_t i = 1; i < one.size(); ++i) CHECK(one[i] == 6.0f);

    // exhaustive sector scan oracle on random neighbors
    RngStream rng(9);
    const SocialConfig cfg = angular_cfg();
    std::vector<Vec2> nbs;
    for (int i = 0; i < 12; ++i)
        nbs.push_back({static_cast<float>(rng.uniform(-7, 7)), static_cast<float>(rng.uniform(-7, 7))});
    const auto feat = angular_grid({0, 0}, nbs, cfg);
    for (int sec = 0; sec < 45; ++sec) {
        double best = cfg.angular_range;
        for (const auto& nb : nbs) {
            const double r = std::hypot(static_cast<double>(nb.x), static_cast<double>(nb.y));
            if (r <= 0.0 || r > cfg.angular_range) continue;
            double ang = std::atan2(static_cast<double>(nb.y), static_cast<double>(nb.x));
            if (ang < 0) ang += 2.0 * M_PI;
            const int s = std::min(44, static_cast<int>(ang / (8.0 * M_PI / 180.0)));
            if (s == sec) best = std::min(best, r);
        }
        CHECK(feat[static_cast<size_t>(sec)] == doctest::Approx(best).epsilon(1e-5));
    }
}

TEST_CASE("occupancy encodings are translation invariant") {
    // coordinates and shifts on a dyadic grid so the shifted inputs are exact
    // floats; the encodings must then agree bit for bit
    RngStream rng(10);
    auto grid64 = [&](double lo, double hi) {
        return static_cast<float>(std::floor(rng.uniform(lo, hi) * 64.0) / 64.0);
    };
    for (int trial = 0; trial < 20; ++trial) {
        const Vec2 subject{grid64(-5, 5), grid64(-5, 5)};
        const Vec2 shift{static_cast<float>(std::floor(rng.uniform(-40, 40) * 4.0) / 4.0),
                         static_cast<float>(std::floor(rng.uniform(-40, 40) * 4.0) / 4.0)};
        std::vector<Vec2> nbs, shifted;
        for (int i = 0; i < 6; ++i) {
            const Vec2 nb{subject.x + grid64(-4, 4), subject.y + grid64(-4, 4)};
            nbs.push_back(nb);
            shifted.push_back(nb + shift);
        }
        const Vec2 subject2 = subject + shift;
        for (auto cfg : {square_cfg(), circle_cfg(), angular_cfg()}) {
            const auto a = social_feature(subject, nbs, cfg);
            const auto b = social_feature(subject2, shifted, cfg);
            CHECK(a == b);
        }
    }
}

TEST_CASE("grid sums count neighbors inside the extent; values stay in range") {
    RngStream rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Vec2> nbs;
        for (int i = 0; i < 15; ++i)
            nbs.push_back({static_cast<float>(rng.uniform(-4, 4)),
                           static_cast<float>(rng.uniform(-4, 4))});

        const SocialConfig sq = square_cfg();
        int inside_square = 0;
        for (const auto& nb : nbs) {
            const float half = sq.l / 2 * sq.cell_side;
            if (nb.x >= -half && nb.x < half && nb.y >= -half && nb.y < half) ++inside_square;
        }
        float sum = 0.0f;
        for (float v : square_occupancy({0, 0}, nbs, sq)) {
            CHECK(v >= 0.0f);
            CHECK(v == std::floor(v));
            sum += v;
        }
        CHECK(sum == static_cast<float>(inside_square));

        const SocialConfig ci = circle_cfg();
        int inside_circle = 0;
        for (const auto& nb : nbs) {
            const double r = std::hypot(static_cast<double>(nb.x), static_cast<double>(nb.y));
            if (r > 0.0 && r <= ci.c * ci.ring_spacing) ++inside_circle;
        }
        sum = 0.0f;
        for (float v : circular_occupancy({0, 0}, nbs, ci)) sum += v;
        CHECK(sum == static_cast<float>(inside_circle));

        for (float v : angular_grid({0, 0}, nbs, angular_cfg())) {
            CHECK(v > 0.0f);
            CHECK(v <= 6.0f);
        }
    }
}

TEST_CASE("binary occupancy toggle") {
    SocialConfig cfg = square_cfg();
    const std::vector<Vec2> two = {{0.1f, 0.1f}, {0.12f, 0.1f}};
    CHECK(square_occupancy({0, 0}, two, cfg)[5 * 10 + 5] == 2.0f);
    cfg.binary = true;
    CHECK(square_occupancy({0, 0}, two, cfg)[5 * 10 + 5] == 1.0f);
}
