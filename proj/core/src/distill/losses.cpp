#include "dforge/distill/losses.hpp"

namespace dforge::distill {

void validate_layer_map(const std::vector<std::pair<int, int>>& layer_map,
                        int student_layers, int teacher_layers) {
  if (layer_map.empty())
    throw ConfigError("hidden matching requires a nonempty layer map");
  for (const auto& [s_layer, t_layer] : layer_map) {
    if (s_layer < 0 || s_layer >= student_layers)
      throw ConfigError("layer map references student layer " +
                        std::to_string(s_layer) + " outside 0.." +
                        std::to_string(student_layers - 1));
    if (t_layer < 0 || t_layer >= teacher_layers)
      throw ConfigError("layer map references teacher layer " +
                        std::to_string(t_layer) + " outside 0.." +
                        std::to_string(teacher_layers - 1));
  }
}

}  // namespace dforge::distill
