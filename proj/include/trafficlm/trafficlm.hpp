#pragma once

// Everything except the test helpers under trafficlm/testing.

#include "trafficlm/bytes.hpp"
#include "trafficlm/config.hpp"
#include "trafficlm/error.hpp"
#include "trafficlm/eval.hpp"
#include "trafficlm/finetune.hpp"
#include "trafficlm/flow.hpp"
#include "trafficlm/mfr.hpp"
#include "trafficlm/nn/checkpoint.hpp"
#include "trafficlm/nn/model.hpp"
#include "trafficlm/nn/optim.hpp"
#include "trafficlm/pcap.hpp"
#include "trafficlm/pipeline.hpp"
#include "trafficlm/pretrain.hpp"
#include "trafficlm/rng.hpp"
#include "trafficlm/synth.hpp"
#include "trafficlm/tokenize.hpp"
