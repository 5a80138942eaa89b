#pragma once

#include <iosfwd>
#include <string>

#include "rsbm/prior.hpp"
#include "rsbm/velocity_model.hpp"

namespace rsbm {

/// Magic first line of every checkpoint container.
inline constexpr const char* kCheckpointMagic = "RSBM1";

/// Text container: the magic line, "key value..." header lines, "params N",
/// N parameter values (round-trip exact), and "end".
void save_velocity_model(std::ostream& out, const VelocityModel& model);
VelocityModel load_velocity_model(std::istream& in);

void save_prior(std::ostream& out, const Prior& prior);
Prior load_prior(std::istream& in);

void save_velocity_model(const std::string& path, const VelocityModel& model);
VelocityModel load_velocity_model(const std::string& path);
void save_prior(const std::string& path, const Prior& prior);
Prior load_prior(const std::string& path);

}  // namespace rsbm
