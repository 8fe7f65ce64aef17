#pragma once

#include <fcp/errors.hpp>

#include <fcp/diffmath/matrix.hpp>
#include <fcp/diffmath/nn.hpp>
#include <fcp/diffmath/param_store.hpp>
#include <fcp/diffmath/tape.hpp>

#include <fcp/ode/dopri5.hpp>

#include <fcp/qmc/ball.hpp>
#include <fcp/qmc/sample_size.hpp>
#include <fcp/qmc/sobol.hpp>

#include <fcp/encoder/transformer.hpp>

#include <fcp/flow/checkpoint.hpp>
#include <fcp/flow/field.hpp>
#include <fcp/flow/path.hpp>
#include <fcp/flow/training.hpp>
#include <fcp/flow/transport.hpp>

#include <fcp/conformal/chi.hpp>
#include <fcp/conformal/prediction_set.hpp>

#include <fcp/predictor/linear_ensemble.hpp>

#include <fcp/data/context.hpp>
#include <fcp/data/dataset.hpp>
#include <fcp/data/splits.hpp>
#include <fcp/data/synth.hpp>

#include <fcp/eval/metrics.hpp>

#include <fcp/cli/config.hpp>
#include <fcp/cli/run.hpp>
