#pragma once

// Writes small files in the UCI telemonitoring layout.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fedcsa/random.hpp"

namespace fedcsa::testing {

inline const char* kParkinsonsHeader =
    "subject#,age,sex,test_time,motor_UPDRS,total_UPDRS,Jitter(%),Jitter(Abs),Jitter:RAP,Jitter:PPQ5,Jitter:DDP,"
    "Shimmer,Shimmer(dB),Shimmer:APQ3,Shimmer:APQ5,Shimmer:APQ11,Shimmer:DDA,NHR,HNR,RPDE,DFA,PPE";

/// `rows_per_subject[s]` rows for subject s + 1, voice values drawn from a
/// subject-specific Gaussian and total_UPDRS linear in them plus noise.
inline std::filesystem::path write_toy_parkinsons(const std::filesystem::path& path,
                                                  const std::vector<int>& rows_per_subject, std::uint64_t seed) {
  std::ofstream out(path);
  out << kParkinsonsHeader << "\n";
  Rng rng(seed);
  for (std::size_t s = 0; s < rows_per_subject.size(); ++s) {
    for (int i = 0; i < rows_per_subject[s]; ++i) {
      std::vector<double> voice(16);
      double signal = 0.0;
      for (int k = 0; k < 16; ++k) {
        voice[static_cast<std::size_t>(k)] = rng.normal(0.3 * static_cast<double>(s), 1.0);
        signal += voice[static_cast<std::size_t>(k)] * (k % 3 - 1);
      }
      const double total = 25.0 + 4.0 * signal + rng.normal();
      out << s + 1 << "," << 60 + s << ",0," << i << "," << 0.8 * total << "," << total;
      for (double v : voice) out << "," << v;
      out << "\n";
    }
  }
  return path;
}

}  // namespace fedcsa::testing
