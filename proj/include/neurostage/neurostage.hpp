#pragma once

#include "neurostage/common.hpp"
#include "neurostage/data/eeg.hpp"
#include "neurostage/data/synthetic_corpus.hpp"
#include "neurostage/eval/complexity.hpp"
#include "neurostage/eval/protocols.hpp"
#include "neurostage/eval/retrieval.hpp"
#include "neurostage/experiments/config.hpp"
#include "neurostage/experiments/plan.hpp"
#include "neurostage/experiments/variants.hpp"
#include "neurostage/features/backbone.hpp"
#include "neurostage/features/feature_bundle.hpp"
#include "neurostage/features/feature_cache.hpp"
#include "neurostage/features/synthetic_features.hpp"
#include "neurostage/io/container.hpp"
#include "neurostage/model/config.hpp"
#include "neurostage/model/staged_model.hpp"
#include "neurostage/objectives/contrastive.hpp"
#include "neurostage/objectives/total_loss.hpp"
#include "neurostage/train/checkpoint.hpp"
#include "neurostage/train/trainer.hpp"
