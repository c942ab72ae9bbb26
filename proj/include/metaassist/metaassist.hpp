#pragma once

#include "metaassist/auxiliary.hpp"
#include "metaassist/config_io.hpp"
#include "metaassist/corpus_io.hpp"
#include "metaassist/data.hpp"
#include "metaassist/errors.hpp"
#include "metaassist/meta_trainer.hpp"
#include "metaassist/metrics.hpp"
#include "metaassist/model.hpp"
#include "metaassist/optim.hpp"
#include "metaassist/oracle.hpp"
#include "metaassist/rng.hpp"
#include "metaassist/types.hpp"
#include "metaassist/weighting.hpp"
