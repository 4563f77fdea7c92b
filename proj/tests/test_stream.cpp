#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "ltcl/stream.hpp"

using namespace ltcl;

namespace {

StreamConfig alpha_config(double alpha, int n = 5, long base = 500) {
  StreamConfig c;
  c.n_tasks = n;
  c.base_count = base;
  c.alpha_stream = alpha;
  return c;
}

StreamConfig ir_config(double ir, int n = 5, long base = 500) {
  StreamConfig c;
  c.n_tasks = n;
  c.base_count = base;
  c.imbalance_ratio = ir;
  return c;
}

// The pool and the stream copy sample vectors, so a sample is identified by
// its exact coordinates.
std::vector<double> key(const Eigen::VectorXd& x) { return {x.data(), x.data() + x.size()}; }

}  // namespace

TEST_CASE("longtail_sizes from alpha") {
  CHECK(longtail_sizes(alpha_config(0.5)) == std::vector<std::size_t>{500, 250, 125, 62, 31});
  CHECK(longtail_sizes(alpha_config(1.0)) == std::vector<std::size_t>(5, 500));
  CHECK(longtail_sizes(alpha_config(1e-6, 3, 5)) == std::vector<std::size_t>{5, 1, 1});
}

TEST_CASE("longtail_sizes from the imbalance ratio") {
  const StreamConfig c = ir_config(0.01);
  CHECK(c.alpha() == doctest::Approx(0.316227766016838).epsilon(1e-14));
  // floor(500 * 0.01^(t/4)) evaluated in exact arithmetic.
  CHECK(longtail_sizes(c) == std::vector<std::size_t>{500, 158, 50, 15, 5});

  CHECK_THROWS_AS(longtail_sizes(ir_config(0.01, 1)), ParameterError);
  StreamConfig both = ir_config(0.01);
  both.alpha_stream = 0.5;
  CHECK_THROWS_AS(both.validate(), ParameterError);
}

TEST_CASE("longtail_sizes is non-increasing") {
  for (double a : {0.05, 0.3, 0.77, 0.999}) {
    const auto sizes = longtail_sizes(alpha_config(a, 8, 1000));
    CHECK(std::is_sorted(sizes.rbegin(), sizes.rend()));
    CHECK(sizes.back() >= 1);
  }
}

TEST_CASE("synth_gaussians") {
  const SamplePool pool = synth_gaussians(10, 2, 3.0, 1000, 7);
  CHECK(pool.num_classes() == 10);
  CHECK(pool.size() == 10000);
  for (const auto& cls : pool.per_class) CHECK(cls.size() == 1000);

  const SamplePool again = synth_gaussians(10, 2, 3.0, 1000, 7);
  CHECK(key(again.per_class[3][17]) == key(pool.per_class[3][17]));

  CHECK_THROWS_AS(synth_gaussians(10, 0, 3.0, 10, 7), ParameterError);

  // With zero separation every class shares the same distribution.
  const SamplePool flat = synth_gaussians(2, 4, 0.0, 4000, 1);
  Eigen::VectorXd m0 = Eigen::VectorXd::Zero(4), m1 = Eigen::VectorXd::Zero(4);
  for (const auto& x : flat.per_class[0]) m0 += x / 4000.0;
  for (const auto& x : flat.per_class[1]) m1 += x / 4000.0;
  CHECK((m0 - m1).norm() < 0.2);
}

TEST_CASE("ordered stream") {
  const SamplePool pool = synth_gaussians(10, 3, 3.0, 600, 2);
  StreamConfig c = ir_config(0.01);
  c.seed = 4;
  const auto stream = build_stream(pool, c);
  REQUIRE(stream.size() == 5);
  const auto sizes = longtail_sizes(c);
  for (int t = 0; t < 5; ++t) {
    CHECK(stream[t].task_id == t);
    CHECK(stream[t].class_set == std::vector<int>{2 * t, 2 * t + 1});
    CHECK(stream[t].size() == sizes[t]);
    for (const auto& s : stream[t].samples) CHECK(stream[t].contains_class(s.y));
  }

  const auto again = build_stream(pool, c);
  for (int t = 0; t < 5; ++t) {
    for (std::size_t i = 0; i < stream[t].size(); ++i) {
      CHECK(again[t].samples[i].y == stream[t].samples[i].y);
      CHECK(key(again[t].samples[i].x) == key(stream[t].samples[i].x));
    }
  }
}

TEST_CASE("stream samples are drawn without replacement from the pool") {
  const SamplePool pool = synth_gaussians(10, 3, 3.0, 300, 9);
  for (Ordering ordering : {Ordering::kOrdered, Ordering::kShuffled}) {
    StreamConfig c = alpha_config(0.6, 5, 300);
    c.ordering = ordering;
    c.seed = 21;
    std::set<std::vector<double>> drawn;
    std::size_t total = 0;
    for (const auto& task : build_stream(pool, c)) {
      for (const auto& s : task.samples) {
        const auto& members = pool.samples_of(s.y);
        CHECK(std::any_of(members.begin(), members.end(),
                          [&](const Eigen::VectorXd& x) { return key(x) == key(s.x); }));
        drawn.insert(key(s.x));
        ++total;
      }
    }
    CHECK(drawn.size() == total);
  }
}

TEST_CASE("shuffled stream partitions the classes") {
  const SamplePool pool = synth_gaussians(10, 2, 3.0, 600, 3);
  std::set<std::vector<int>> layouts;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    StreamConfig c = ir_config(0.01);
    c.ordering = Ordering::kShuffled;
    c.seed = seed;
    const auto stream = build_stream(pool, c);
    std::vector<int> all;
    for (const auto& t : stream) all.insert(all.end(), t.class_set.begin(), t.class_set.end());
    layouts.insert(all);
    std::sort(all.begin(), all.end());
    CHECK(all == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  }
  CHECK(layouts.size() > 1);
}

TEST_CASE("insufficient pool names the class") {
  const SamplePool pool = synth_gaussians(10, 2, 3.0, 100, 3);
  StreamConfig c = ir_config(0.01);
  try {
    build_stream(pool, c);
    FAIL("expected CapacityError");
  } catch (const CapacityError& e) {
    CHECK(std::string(e.what()).find("class 0") != std::string::npos);
  }
}

TEST_CASE("split_holdout and build_test_stream") {
  const SamplePool pool = synth_gaussians(4, 2, 3.0, 50, 5);
  const auto [train, test] = split_holdout(pool, 10, 6);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(train.per_class[k].size() == 40);
    CHECK(test.per_class[k].size() == 10);
  }
  StreamConfig c = alpha_config(0.5, 2, 40);
  c.classes_per_task = 2;
  const auto stream = build_stream(train, c);
  const auto tests = build_test_stream(test, stream);
  REQUIRE(tests.size() == 2);
  CHECK(tests[0].size() == 20);
  CHECK(tests[1].class_set == stream[1].class_set);
  CHECK_THROWS_AS(split_holdout(pool, 50, 6), CapacityError);
}

TEST_CASE("pool CSV") {
  std::istringstream three("label,f0,f1\n0,1.5,2\n1,-3,4e-1\n0,0,0\n");
  const SamplePool pool = parse_pool(three);
  CHECK(pool.num_classes() == 2);
  CHECK(pool.per_class[0].size() == 2);
  CHECK(pool.per_class[1][0](1) == 0.4);

  std::istringstream empty("");
  CHECK_THROWS_AS(parse_pool(empty), ParseError);

  std::istringstream ragged("label,f0,f1\n0,1,2\n1,3\n");
  try {
    parse_pool(ragged);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  std::istringstream text("label,f0\n0,abc\n");
  CHECK_THROWS_AS(parse_pool(text), ParseError);
  std::istringstream header("lbl,f0\n0,1\n");
  CHECK_THROWS_AS(parse_pool(header), ParseError);

  const SamplePool synth = synth_gaussians(3, 4, 2.0, 20, 8);
  std::stringstream buffer;
  write_pool(synth, buffer);
  const SamplePool back = parse_pool(buffer);
  REQUIRE(back.labels == synth.labels);
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t i = 0; i < 20; ++i) CHECK(key(back.per_class[k][i]) == key(synth.per_class[k][i]));
  }
}
