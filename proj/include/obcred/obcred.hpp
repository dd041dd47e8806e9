#pragma once

#include "obcred/lang.hpp"
#include "obcred/semantics.hpp"
#include "obcred/assertions.hpp"
#include "obcred/proofs.hpp"
#include "obcred/certificate.hpp"
#include "obcred/ghost.hpp"
#include "obcred/pog.hpp"
#include "obcred/harness.hpp"
