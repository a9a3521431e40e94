#include <gtest/gtest.h>

#include <cmath>

#include "safenav/world_model.hpp"

using namespace safenav;

namespace {

Costmap block_at(int row, int col, int size = 2) {
  Costmap m;
  for (int r = row; r < row + size; ++r)
    for (int c = col; c < col + size; ++c) m.set(r, c, 1);
  return m;
}

Observation obs_of(std::vector<Costmap> frames, Action v = {}) {
  Observation o;
  o.frames = std::move(frames);
  o.velocity = v;
  return o;
}

}  // namespace

TEST(EgoIntegration, MatchesSimulatorSubsteps) {
  const Action a{0.8, 1.2};
  const EgoMotion m = integrate_ego_motion(a, 0.5, 0.1);
  Pose2D p{};
  for (int k = 0; k < 5; ++k) p = integrate_unicycle(p, a, 0.1);
  EXPECT_NEAR(m.dx, p.x, 1e-12);
  EXPECT_NEAR(m.dy, p.y, 1e-12);
  EXPECT_NEAR(m.dtheta, p.theta, 1e-12);
  const auto st = ego_motion_stages(a, 0.5, 0.1);
  ASSERT_EQ(st.size(), 5u);
  EXPECT_NEAR(st.back().dx, p.x, 1e-12);
}

TEST(Flow, StaticFramesGiveZeroFlow) {
  const Costmap m = block_at(30, 20);
  const std::vector<Costmap> frames{m, m, m};
  const FlowModel f = estimate_flow(frames, {});
  EXPECT_TRUE(f.is_zero());
  EXPECT_EQ(f.confidence, 1.0);
}

TEST(Flow, ConstantVelocityBlob) {
  const std::vector<Costmap> frames{block_at(30, 20), block_at(30, 21), block_at(30, 22)};
  const FlowModel f = estimate_flow(frames, {});
  const Costmap& last = frames.back();
  for (std::size_t i = 0; i < last.size(); ++i) {
    if (!last[i]) continue;
    EXPECT_NEAR(f.flow[i].x, 1.0, 1e-12);
    EXPECT_NEAR(f.flow[i].y, 0.0, 1e-12);
  }
}

TEST(Flow, NeedsTwoFrames) {
  const std::vector<Costmap> one(1);
  EXPECT_THROW(estimate_flow(one, {}), ValidationError);
}

TEST(Predict, StaticWithZeroActionIsIdentity) {
  const Costmap m = block_at(30, 20, 3);
  const Observation o = obs_of({m, m, m});
  EXPECT_EQ(predict_static(o, {0.0, 0.0}, 0.5).costmap, m);
}

TEST(Predict, StaticShiftsByEgoMotion) {
  const Costmap m = block_at(34, 23, 2);
  const Observation o = obs_of({m, m, m});
  // 0.2 m forward in 0.5 s
  const Costmap p = predict_static(o, {0.4, 0.0}, 0.5).costmap;
  EXPECT_EQ(p, block_at(32, 23, 2));
}

TEST(Predict, FlowExtrapolatesMovingBlob) {
  // blob drifts one column (0.1 m to the right) per frame
  const std::vector<Costmap> frames{block_at(30, 20), block_at(30, 21), block_at(30, 22)};
  const Observation o = obs_of(frames);
  const Costmap p = predict_flow(o, {0.0, 0.0}, 0.1).costmap;
  EXPECT_EQ(p, block_at(30, 23));
  // the static model leaves it in place
  EXPECT_EQ(predict_static(o, {0.0, 0.0}, 0.1).costmap, frames.back());
}

TEST(Predict, FlowFallsBackToStaticWithoutMotion) {
  const Costmap m = block_at(28, 28, 3);
  const Observation o = obs_of({m, m, m});
  EXPECT_EQ(predict_flow(o, {0.3, 0.2}, 0.5), predict_static(o, {0.3, 0.2}, 0.5));
}

TEST(Predict, ErrorIsZeroForExactPrediction) {
  const std::vector<Costmap> frames{block_at(30, 20), block_at(30, 21), block_at(30, 22)};
  Transition t{obs_of(frames), {0.0, 0.0}, block_at(30, 23), 0.1};
  const std::vector<Transition> ds{t};
  EXPECT_EQ(prediction_error({ModelKind::flow, {}}, ds), 0.0);
  EXPECT_DOUBLE_EQ(prediction_error({ModelKind::quasi_static, {}}, ds), 1.0);  // 4 cells off / 4 occupied
  EXPECT_THROW(prediction_error({ModelKind::flow, {}}, std::span<const Transition>{}), ValidationError);
}

TEST(Predict, FitGainPrefersMatchingScale) {
  const std::vector<Costmap> frames{block_at(30, 20), block_at(30, 21), block_at(30, 22)};
  // realized motion is two columns in one frame interval
  Transition t{obs_of(frames), {0.0, 0.0}, block_at(30, 24), 0.1};
  const std::vector<Transition> ds{t};
  const std::vector<double> gains{0.5, 1.0, 2.0};
  EXPECT_EQ(fit_flow_gain({ModelKind::flow, {}}, ds, gains), 2.0);
}

TEST(SweptBarrier, CatchesPassThrough) {
  // A point 0.3 m ahead read only at the end of a 0.5 m advance would be
  // behind the robot; the sweep sees it come within reach on the way.
  const CbfParams cbf;
  const auto st = ego_motion_stages({1.0, 0.0}, 0.5, 0.1);
  const auto h = swept_barrier(st, {0.3, 0.0}, {0.3, 0.0}, 1.0, cbf);
  ASSERT_TRUE(h.has_value());
  const Vec2 end = st.back().to_later({0.3, 0.0});
  EXPECT_LT(*h, barrier_value(end, 1.0, cbf));
}

TEST(ModelKind, Strings) {
  EXPECT_EQ(model_kind_from_string("flow"), ModelKind::flow);
  EXPECT_EQ(model_kind_from_string("static"), ModelKind::quasi_static);
  EXPECT_EQ(to_string(ModelKind::flow), "flow");
  EXPECT_THROW(model_kind_from_string("oracle"), ValidationError);
}
