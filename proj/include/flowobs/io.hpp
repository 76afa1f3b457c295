#pragma once

// CSV artifacts and number formatting. Numbers are written in the shortest
// decimal form that round-trips to the identical double.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "flowobs/battery_model.hpp"
#include "flowobs/observer.hpp"

namespace flowobs {

std::string format_double(double v);

// Strict parse of a whole token; throws IngestError naming `context`.
double parse_double(std::string_view text, const std::string& context);

// time_min,v_out_V,current_A,flow_L_per_min
void write_measurements_csv(const std::filesystem::path& path, const std::vector<MeasurementSample>& samples);
std::vector<MeasurementSample> read_measurements_csv(const std::filesystem::path& path);

// time_min,soc,soc_cell,crossover_mol_per_min,v_out_V
void write_truth_csv(const std::filesystem::path& path, const Trajectory& truth);
Trajectory read_truth_csv(const std::filesystem::path& path);

// time_min,soc_hat,soc_cell_hat,theta_hat,omega_2_hat..,y_hat,innovation,gain_0..,crossover_hat_mol_per_min
void write_trace_csv(const std::filesystem::path& path, const ObserverTrace& trace);
ObserverTrace read_trace_csv(const std::filesystem::path& path);

}  // namespace flowobs
