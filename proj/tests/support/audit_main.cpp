#include <gtest/gtest.h>

#include "decoy/gateway.hpp"

namespace {

/// Fails the run if anything in the binary opened a non-loopback connection.
class IsolationAudit : public ::testing::Environment {
 public:
  void TearDown() override { EXPECT_EQ(decoy::net_audit::outbound_connections(), 0u); }
};

}  // namespace

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  ::testing::AddGlobalTestEnvironment(new IsolationAudit);
  return RUN_ALL_TESTS();
}
