// SPDX-License-Identifier: Apache-2.0
#pragma once

// Everything except the HTTP pieces (llm_refine.hpp, study_server.hpp), which
// pull in cpp-httplib.
#include "corpus.hpp"
#include "error.hpp"
#include "finding.hpp"
#include "labeler.hpp"
#include "lexicon.hpp"
#include "metrics.hpp"
#include "normalizer.hpp"
#include "random.hpp"
#include "stats.hpp"
#include "study.hpp"
#include "text.hpp"
