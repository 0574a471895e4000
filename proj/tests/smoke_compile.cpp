#include "ffsd/ffsd.hpp"
int main() {
  ffsd::ModelConfig cfg;
  ffsd::SsdModel<float> model(cfg, 1);
  return model.priors().count() == 846 ? 0 : 1;
}
